"""Flat-torus arithmetic, minimal displacements, and unfolded trajectories.

Positions live on the flat torus ``[0, r)^d`` (opposite faces identified) or
in ``R^d`` when the edge is infinite.  Torus points are always stored in the
canonical representative with every coordinate in ``[0, r)``; distances use
the minimal-displacement vector, whose components lie in ``(-r/2, r/2]`` with
the tie at exactly ``r/2`` broken toward ``+r/2`` so replayed runs are
bit-identical.

A torus path can be "unfolded" into an ``R^d`` path by accumulating minimal
displacements step by step; this is well defined as long as every step is
shorter than half the edge in each component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: Distinguished edge value selecting the whole-space (R^d) geometry.
INFINITE = math.inf


@dataclass(frozen=True)
class Space:
    """Ambient space: a flat ``dim``-torus with the given edge, or ``R^dim``.

    The finite case requires ``edge > 4`` so that two unit balls and the
    driver always fit with room to move.
    """

    dim: int
    edge: float = INFINITE

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValueError(f"dimension must be an integer >= 2, got {self.dim}")
        if self.edge != INFINITE and not self.edge > 4:
            raise ValueError(f"finite torus edge must exceed 4, got {self.edge}")

    @property
    def finite(self) -> bool:
        return math.isfinite(self.edge)

    @classmethod
    def torus(cls, dim: int, edge: float) -> "Space":
        return cls(dim=dim, edge=float(edge))

    @classmethod
    def free(cls, dim: int) -> "Space":
        return cls(dim=dim, edge=INFINITE)


def _as_vector(p, space: Space) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (space.dim,):
        raise ValueError(f"expected a {space.dim}-vector, got shape {p.shape}")
    return p


def wrap(p, space: Space) -> np.ndarray:
    """Canonical torus representative of ``p``: each coordinate in ``[0, r)``.

    Total on finite spaces; rejects the infinite space, where there is
    nothing to wrap.
    """
    if not space.finite:
        raise ValueError("wrap is undefined on the infinite space")
    p = _as_vector(p, space)
    r = space.edge
    out = p - r * np.floor(p / r)
    # floor can land exactly on r for inputs just below a multiple of r
    out[out >= r] -= r
    return out


def displacement(a, b, space: Space) -> np.ndarray:
    """Minimal-norm vector ``v`` with ``a + v = b (mod r)``.

    Components lie in ``(-r/2, r/2]``; the tie at exactly ``r/2`` goes to
    ``+r/2``.  On the infinite space this is plain ``b - a``.
    """
    a = _as_vector(a, space)
    b = _as_vector(b, space)
    d = b - a
    if not space.finite:
        return d
    r = space.edge
    d -= r * np.floor(d / r)  # into [0, r)
    d[d >= r] -= r
    d[d > r / 2] -= r
    return d


def torus_distance(a, b, space: Space) -> float:
    """Length of the minimal displacement from ``a`` to ``b``."""
    return float(np.linalg.norm(displacement(a, b, space)))


def outward_normal(center, p, space: Space) -> np.ndarray:
    """Unit vector at ``p`` pointing away from ``center`` (torus metric)."""
    v = displacement(center, p, space)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("degenerate normal: point coincides with center")
    return v / n


def unfold_step(prev_unfolded, new_torus, space: Space) -> np.ndarray:
    """Extend an unfolded (lifted) trajectory by one torus move.

    ``prev_unfolded`` is the current lift in ``R^d``; its torus image is
    ``wrap(prev_unfolded)``.  The move to ``new_torus`` must be strictly
    shorter than ``r/2`` in every component, otherwise the lift is ambiguous.
    """
    prev_unfolded = _as_vector(prev_unfolded, space)
    step = displacement(wrap(prev_unfolded, space), new_torus, space)
    if np.any(np.abs(step) >= space.edge / 2):
        raise ValueError("unfolding ambiguity: step reaches r/2 in some component")
    return prev_unfolded + step
