"""Seeding discipline: one global seed, named sub-streams.

Every random draw in the pipeline comes from a generator obtained through
``substream(seed, name)``.  The name is hashed with FNV-1a so the streams
are decoupled: changing how many draws one phase makes never perturbs
another phase.
"""

from __future__ import annotations

import numpy as np

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes | str) -> int:
    """64-bit FNV-1a hash of a byte string (str encodes as UTF-8)."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named phase of the pipeline."""
    return np.random.default_rng([int(seed) & _MASK64, fnv1a64(name)])
