"""Deterministic replica orchestration.

Replica ``k`` of any estimator draws from the stream named ``(base_seed,
k)``; workers may complete in any order but results are always reduced in
replica order, so aggregated output is byte-identical for any thread count.
The compiled kernels release the GIL, which makes plain threads effective.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def run_replicas(task, n_replicas: int, threads: int = 1) -> list:
    """Evaluate ``task(replica_index)`` for every replica.

    Returns results ordered by replica index regardless of completion order.
    """
    if n_replicas < 1:
        raise ValueError("need at least one replica")
    threads = max(1, int(threads))
    if threads == 1:
        return [task(k) for k in range(n_replicas)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(task, k) for k in range(n_replicas)]
        return [f.result() for f in futures]
