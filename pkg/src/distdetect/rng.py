"""Seeded, splittable random streams.

Every logical stream (dataset draws, shuffling, dithering, Monte Carlo blocks)
is derived from a master seed plus a tuple of labels, so any stream can be
recreated in isolation and independent blocks can run in parallel.
"""
from __future__ import annotations

import hashlib

import numpy as np


def _label_words(labels) -> list[int]:
    words = []
    for label in labels:
        digest = hashlib.sha256(repr(label).encode("utf-8")).digest()
        words.append(int.from_bytes(digest[:4], "little"))
    return words


def derive_seed(seed: int, *labels) -> int:
    """Deterministic 63-bit seed for the stream ``(seed, *labels)``."""
    ss = np.random.SeedSequence(entropy=int(seed) & ((1 << 64) - 1), spawn_key=_label_words(labels))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def stream(seed: int, *labels) -> np.random.Generator:
    """Counter-based (Philox) generator for the stream ``(seed, *labels)``."""
    return np.random.Generator(np.random.Philox(derive_seed(seed, *labels)))
