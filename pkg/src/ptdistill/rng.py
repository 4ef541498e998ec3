"""Deterministic RNG derivation.

All randomness flows from explicit seeds through named derivation paths
(seed, purpose, index...); there is no global generator. String purposes
are hashed with CRC32 so the derived streams are stable across runs and
platforms.
"""
from __future__ import annotations

import zlib

import numpy as np


def _to_word(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part) & 0xFFFFFFFF


def derive_rng(*parts) -> np.random.Generator:
    """A Generator seeded from the named derivation path."""
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([_to_word(p) for p in parts]))
    )
