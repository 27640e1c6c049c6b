"""Deterministic seed derivation for independent random streams.

A single master seed fans out into named 63-bit sub-seeds via SHA-256, and
every sub-seed keys its own counter-based Philox stream. Distinct keys give
disjoint streams by construction, so concurrent consumers never overlap.
"""
from __future__ import annotations

import hashlib

import numpy as np

MAX_SEED = 2**63 - 1


def derive_seed(master: int, *labels) -> int:
    """Derive a stable 63-bit sub-seed from ``master`` and a label path.

    Labels may be strings or integers; the same (master, labels) always maps
    to the same seed, and different label paths map to independent seeds.
    """
    h = hashlib.sha256()
    h.update(str(int(master)).encode())
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode())
    return int.from_bytes(h.digest()[:8], "little") & MAX_SEED


def philox(seed: int) -> np.random.Generator:
    """Counter-based generator keyed by ``seed`` (disjoint streams per key)."""
    return np.random.Generator(np.random.Philox(key=int(seed)))


def distinct_seed_pair(rng: np.random.Generator) -> tuple[int, int]:
    """Draw two distinct stream seeds from ``rng``."""
    s1 = int(rng.integers(0, MAX_SEED, dtype=np.int64))
    s2 = int(rng.integers(0, MAX_SEED, dtype=np.int64))
    while s2 == s1:
        s2 = int(rng.integers(0, MAX_SEED, dtype=np.int64))
    return s1, s2
