"""Deterministic RNG derivation from a single root seed.

Every random decision in the package draws from a substream derived from
the root seed plus a stable sequence of keys (strings or ints). Streams
are independent of each other and of scheduling order, so any unit of
work (one trajectory, one CV fold, one permutation) is re-generable in
isolation.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_entropy(root_seed: int, *keys) -> list[int]:
    """Hash (root_seed, keys...) into 256 bits of seed entropy."""
    h = hashlib.sha256()
    h.update(str(int(root_seed)).encode("utf-8"))
    for key in keys:
        h.update(b"\x1f")
        h.update(str(key).encode("utf-8"))
    digest = h.digest()
    return [int.from_bytes(digest[i : i + 8], "little") for i in range(0, 32, 8)]


def derive_rng(root_seed: int, *keys) -> np.random.Generator:
    """Independent generator for the substream named by ``keys``."""
    return np.random.default_rng(np.random.SeedSequence(derive_entropy(root_seed, *keys)))


def derive_seed(root_seed: int, *keys) -> int:
    """64-bit integer seed for APIs that take a plain int."""
    return derive_entropy(root_seed, *keys)[0]
