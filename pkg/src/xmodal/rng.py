"""Deterministic randomness: one user-facing seed fans out into named substreams.

Every random decision in the pipeline (split, init, shuffle, synth, ...)
draws from `substream(seed, label)` so that components are independently
reproducible and byte-stable across platforms.
"""

import hashlib

import numpy as np

_U64 = (1 << 64) - 1


def hash64(text: str) -> int:
    """Stable 64-bit hash of a string; unlike hash(), not salted per process."""
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def substream(seed: int, label: str) -> np.random.Generator:
    """Child generator of `seed` for the given label, independent per label."""
    return np.random.default_rng(np.random.SeedSequence([seed & _U64, hash64(label)]))
