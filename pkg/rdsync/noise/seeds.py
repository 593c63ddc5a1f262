"""
Seed mixing for ensembles and seed sweeps.

Member `i` of an ensemble started from `seed` uses derive_seed(seed, i), the
SplitMix64 finaliser applied to seed + (i + 1) * 0x9E3779B97F4A7C15 (mod 2^64).
"""
from __future__ import annotations

from typing import List

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, index: int) -> int:
    if index < 0:
        raise ValueError(f"member index must be non-negative, got {index}")
    return mix64(seed + (index + 1) * GOLDEN_GAMMA)


def derive_seeds(seed: int, n: int) -> List[int]:
    return [derive_seed(seed, i) for i in range(n)]
