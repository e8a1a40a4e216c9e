"""Seed stream derivation.

Every stochastic stage (splits, SMOTE, weight init, dropout, trees, tuning)
draws from its own generator derived from one integer seed plus a tuple of
string/integer keys.  Streams are independent of the order in which stages
run, so adding a stage never perturbs the others.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_to_int(key: int | str) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    return zlib.crc32(str(key).encode("utf-8"))


def derive_seed_sequence(seed: int, *keys: int | str) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key_to_int(k) for k in keys))


def derive_rng(seed: int, *keys: int | str) -> np.random.Generator:
    """Return a PCG64 generator for the stream ``(seed, *keys)``."""
    return np.random.Generator(np.random.PCG64(derive_seed_sequence(seed, *keys)))


def derive_int(seed: int, *keys: int | str) -> int:
    """A 31-bit integer seed for the stream ``(seed, *keys)``."""
    return int(derive_seed_sequence(seed, *keys).generate_state(1)[0] & 0x7FFFFFFF)
