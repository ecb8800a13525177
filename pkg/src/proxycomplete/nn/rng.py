"""Counter-based random streams.

Dropout masks and query-side noise must be reproducible given
(seed, step, op tag) without any shared mutable RNG state, so every draw
site builds a fresh Philox generator keyed by those three values.
"""
from __future__ import annotations

import hashlib

import numpy as np


def _tag_hash(step: int, tag: str) -> int:
    digest = hashlib.blake2b(f"{step}:{tag}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def mix(*parts: int) -> int:
    """Fold several integers into one 64-bit seed."""
    digest = hashlib.blake2b(repr(parts).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream(seed: int, step: int, tag: str) -> np.random.Generator:
    """Deterministic generator for one (seed, step, op) site."""
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(_tag_hash(step, tag))])
    return np.random.Generator(np.random.Philox(key=key))


def standard_normal(shape, seed: int, step: int = 0, tag: str = "") -> np.ndarray:
    return stream(seed, step, tag).standard_normal(shape)
