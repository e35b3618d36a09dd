"""Deterministic derivation of random streams from integer key tuples.

Every stochastic code path builds its numpy Generator through `rng_from`,
so a whole experiment is a pure function of the master seed and no stream
is shared between concurrently evaluated candidates.
"""

from __future__ import annotations

import numpy as np

# Stream tags keep derived streams from colliding when one master seed
# feeds several purposes.
TAG_POLICY_INIT = 11
TAG_ROLLOUT = 12
TAG_SHUFFLE = 13
TAG_EVAL = 14
TAG_OUTER = 15
TAG_CANDIDATE = 16

SeedLike = "int | tuple[int, ...] | np.random.Generator"


def seed_key(seed) -> tuple[int, ...]:
    """Normalize an int or tuple seed to a tuple of non-negative ints."""
    if isinstance(seed, (int, np.integer)):
        key = (int(seed),)
    else:
        key = tuple(int(k) for k in seed)
    if any(k < 0 for k in key):
        raise ValueError(f"seed keys must be non-negative, got {key}")
    return key


def rng_from(seed) -> np.random.Generator:
    """Build (or pass through) a Generator for a seed key.

    Accepts an int, a tuple of ints, or an existing Generator.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed_key(seed))))
