"""Deterministic seed derivation.

Every random draw in the workbench flows from a 64-bit root seed through
`derive`, a splitmix64-based mixer over (seed, *parts). Parts may be ints
(system index, trial index, record index) or short strings (stage tags such
as "graph" or "noise"). String parts are folded in via blake2b so the
derivation is stable across processes and platforms, unlike ``hash()``.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _part_to_int(part: int | str) -> int:
    if isinstance(part, str):
        return int.from_bytes(hashlib.blake2b(part.encode(), digest_size=8).digest(), "big")
    return part & _MASK


def derive(seed: int, *parts: int | str) -> int:
    """Mix a root seed with identifying parts into a new 64-bit seed."""
    state = seed & _MASK
    for part in parts:
        state = _splitmix64(state ^ _part_to_int(part))
    return state


def rng_for(seed: int, *parts: int | str) -> np.random.Generator:
    """Generator seeded by `derive(seed, *parts)`."""
    return np.random.default_rng(derive(seed, *parts))
