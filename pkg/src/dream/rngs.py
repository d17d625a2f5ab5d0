"""Deterministic RNG streams keyed by integer tuples.

Every source of randomness in the package draws from a generator built
here, so runs are reproducible from (seed, purpose, index) keys alone.
The tag constants keep unrelated consumers (data generation, parameter
init, training, evaluation, probing, sampling) on disjoint streams.
"""

from __future__ import annotations

import numpy as np

DATA = 101
INIT = 211
TRAIN = 307
EVAL = 401
PROBE = 503
SAMPLE = 601


def derive(*keys: int) -> np.random.Generator:
    """PCG64 generator seeded from the key tuple."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(k) for k in keys])))


def child_seed(rng: np.random.Generator) -> int:
    """One 63-bit seed drawn from rng, for spawning a subordinate stream."""
    return int(rng.integers(0, 2**63))
