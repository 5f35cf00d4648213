"""Replica loop with derived seeds, deterministic regardless of threads.

Estimators hand ``replicate`` a worker ``(replica_index, rng) -> row``;
rows are written into a preallocated array indexed by replica, so the
result is the same whether the chunks run on one thread or many.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .rng import derive_rng

_CHUNK = 512


def replicate(n_replicas, worker, master_seed, stream, threads=1, width=None):
    """Run ``worker`` once per replica and stack the rows.

    Each replica gets its own generator derived from
    ``(master_seed, stream, replica)``; see :mod:`poisson_malliavin.rng`.
    Returns an array of shape (n_replicas,) or (n_replicas, width).
    """
    if n_replicas < 1:
        raise ValueError("need at least one replica")
    first = np.asarray(worker(0, derive_rng(master_seed, stream, 0)), dtype=float)
    if width is None:
        width = first.size if first.ndim else 0
    out = np.empty((n_replicas,) if width == 0 else (n_replicas, width))
    out[0] = first

    def run_chunk(start, stop):
        for r in range(start, stop):
            out[r] = worker(r, derive_rng(master_seed, stream, r))

    if threads <= 1 or n_replicas <= _CHUNK:
        run_chunk(1, n_replicas)
    else:
        bounds = list(range(1, n_replicas, _CHUNK)) + [n_replicas]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(run_chunk, a, b) for a, b in zip(bounds[:-1], bounds[1:])]
            for f in futures:
                f.result()
    return out


def mean_se(samples: np.ndarray):
    """Sample mean and standard error along axis 0."""
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    mean = samples.mean(axis=0)
    if n < 2:
        return mean, np.zeros_like(mean)
    se = samples.std(axis=0, ddof=1) / np.sqrt(n)
    return mean, se
