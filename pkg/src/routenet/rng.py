"""Seeded random streams.

All randomness goes through numpy's PCG64 bit generator, which produces the
same stream on every platform. Independent sub-streams are derived by hashing
the master seed together with integer keys (scenario index, step, ...).
"""
import numpy as np

ALGORITHM = "numpy.PCG64/SeedSequence"


def seed_sequence(seed: int, *keys: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed) & (2**63 - 1), *(int(k) for k in keys)])


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *keys)))


def derive_seed(seed: int, *keys: int) -> int:
    """A 63-bit integer seed for a sub-stream."""
    return int(seed_sequence(seed, *keys).generate_state(1, np.uint64)[0] >> np.uint64(1))
