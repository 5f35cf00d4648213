"""Deterministic random-number streams for reproducible Monte Carlo.

Every stochastic routine in the package draws from a generator derived
from a ``(master_seed, stream, replica, ...)`` path through numpy's
``SeedSequence`` spawn-key mechanism.  The derivation is a pure function
of the path, so results never depend on thread scheduling or on the
order in which replicas are executed.
"""

from __future__ import annotations

import numpy as np

# Stream tags.  Keeping them distinct guarantees e.g. that mixture noise
# is independent of the configuration sampling it is coupled to.
CONFIG_STREAM = 0
MIXTURE_STREAM = 1
NOISE_STREAM = 2
BOOTSTRAP_STREAM = 3
PROBE_STREAM = 4


def derive_rng(master_seed: int, *path: int) -> np.random.Generator:
    """Return the generator for ``(master_seed, *path)``.

    The path is used as a SeedSequence spawn key, so any two distinct
    paths yield independent streams, and the same path always yields the
    same stream.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.PCG64(ss))


def as_rng(seed) -> np.random.Generator:
    """Coerce an int seed or an existing Generator to a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
