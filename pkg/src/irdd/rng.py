"""Counter-based random streams.

Every stochastic routine in the package derives its generator from a master
seed plus a tuple of integer counters (cell ids, replicate index, ...), so a
replicate's draws never depend on which worker ran it or in what order.
"""

from __future__ import annotations

import numpy as np

SeedLike = int | np.random.SeedSequence


def _entropy(seed: SeedLike) -> tuple[int | list[int], tuple[int, ...]]:
    if isinstance(seed, np.random.SeedSequence):
        return seed.entropy, tuple(seed.spawn_key)
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an int or SeedSequence, got {type(seed).__name__}")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return int(seed), ()


def substream(seed: SeedLike, *counters: int) -> np.random.SeedSequence:
    """Child seed sequence addressed by ``counters`` below ``seed``."""
    entropy, key = _entropy(seed)
    return np.random.SeedSequence(entropy, spawn_key=key + tuple(int(c) for c in counters))


def stream(seed: SeedLike, *counters: int) -> np.random.Generator:
    """Generator for the substream ``(seed, *counters)``."""
    return np.random.Generator(np.random.PCG64(substream(seed, *counters)))


# Fixed namespace tags keep streams of different routines apart.
TAG_BOOTSTRAP = 1
TAG_MC = 2
TAG_LIMIT = 3
TAG_CSTAR = 4
TAG_CLT = 5
TAG_COVERAGE = 6
