"""Seed plumbing and small shared helpers."""

from __future__ import annotations

import hashlib

import numpy as np


def as_seed_sequence(seed) -> np.random.SeedSequence:
    """Coerce an int, ``SeedSequence``, or ``None`` into a ``SeedSequence``."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def rng_from(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(as_seed_sequence(seed))


def spawn_rngs(seed, n: int) -> list[np.random.Generator]:
    """Independent generators derived from a master seed by counter splitting."""
    return [np.random.default_rng(s) for s in as_seed_sequence(seed).spawn(n)]


def stable_hash_floats(values, digits: int = 12) -> int:
    """Deterministic 63-bit hash of a float vector, stable across processes.

    Values are rounded before hashing so that equal sequences produced along
    different arithmetic paths collide only when they agree to ``digits``.
    """
    arr = np.round(np.asarray(values, dtype=float), digits) + 0.0  # kill -0.0
    digest = hashlib.blake2b(arr.tobytes(), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1
