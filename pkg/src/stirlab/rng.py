"""Deterministic random-number plumbing.

Two seeded streams are used, both derived from the 64-bit base seed through
``numpy.random.SeedSequence`` so that any ``(base_seed, *key)`` pair names a
reproducible stream:

* vectorised numpy-level sampling uses a ``Generator`` on the Philox
  counter-based bit generator;
* compiled kernels use xoshiro256++ seeded by splitmix64 expansion of a
  single 64-bit word, with Gaussians from the Box-Muller transform computed
  pairwise (see :mod:`stirlab.kernels`).

Replica ``k`` of a run always draws from stream ``(base_seed, k)`` and
replicas are reduced in index order, so results are independent of the number
of worker threads.
"""

from __future__ import annotations

import numpy as np


def spawn_generator(base_seed: int, *key: int) -> np.random.Generator:
    """Generator for the numpy-level stream named by ``(base_seed, *key)``."""
    ss = np.random.SeedSequence((int(base_seed),) + tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def kernel_seed(base_seed: int, *key: int) -> np.uint64:
    """64-bit kernel seed for the stream named by ``(base_seed, *key)``."""
    ss = np.random.SeedSequence((int(base_seed),) + tuple(int(k) for k in key))
    return np.uint64(ss.generate_state(1, dtype=np.uint64)[0])
