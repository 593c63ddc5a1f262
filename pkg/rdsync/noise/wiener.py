"""
Two-sided discrete Wiener paths with an exact shift.

Increment k of component c covers model time [k*delta, (k+1)*delta). It is
drawn from a Philox stream keyed on (mix64(seed), c) at the counter of block
floor(k / BLOCK), so any increment can be regenerated without the ones
before it. Increments are rounded to the dyadic lattice 2^-32; partial sums
of lattice values are exact in double precision, which makes
value(shift(p, s), t) == value(p, t + s) - value(p, s) hold bitwise.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Tuple

import numpy as np

from rdsync.core.errors import GridAlignmentError, WindowError
from rdsync.noise.seeds import MASK64, mix64

logger = logging.getLogger(__name__)

BLOCK = 4096
LATTICE_BITS = 32
_INDEX_BIAS = 1 << 63


def _quantize(x: np.ndarray) -> np.ndarray:
    return np.ldexp(np.rint(np.ldexp(x, LATTICE_BITS)), -LATTICE_BITS)


@lru_cache(maxsize=1024)
def _block(key: int, component: int, block: int, delta: float) -> np.ndarray:
    counter = np.array([0, 0, (block + _INDEX_BIAS) & MASK64, 0], dtype=np.uint64)
    bitgen = np.random.Philox(key=np.array([key, component], dtype=np.uint64), counter=counter)
    z = np.random.Generator(bitgen).standard_normal(BLOCK)
    out = _quantize(math.sqrt(delta) * z)
    out.setflags(write=False)
    return out


def grid_index(t: float, delta: float) -> int:
    """Index k with k*delta == t; raises GridAlignmentError when t is off the grid."""
    k = round(t / delta)
    if abs(k * delta - t) > 1e-9 * delta:
        raise GridAlignmentError(f"time {t!r} is not a multiple of delta={delta!r}")
    return int(k)


@dataclass(frozen=True)
class WienerPath:
    seed: int
    dim: int
    delta: float
    window: Tuple[int, int]
    origin_offset: int = 0

    @property
    def key(self) -> int:
        return mix64(self.seed)

    @property
    def t_min(self) -> float:
        return self.window[0] * self.delta

    @property
    def t_max(self) -> float:
        return self.window[1] * self.delta

    def index(self, t: float) -> int:
        return grid_index(t, self.delta)

    def check_range(self, k0: int, k1: int) -> None:
        lo, hi = self.window
        if k0 < lo or k1 > hi:
            raise WindowError(
                f"increments [{k0}, {k1}) outside window [{lo}, {hi}] (delta={self.delta})"
            )

    def increments(self, k0: int, k1: int) -> np.ndarray:
        """Increments k0..k1-1 as an array of shape (k1 - k0, dim)."""
        if k1 < k0:
            raise ValueError(f"empty increment range [{k0}, {k1})")
        self.check_range(k0, k1)
        out = np.empty((k1 - k0, self.dim))
        if k1 == k0:
            return out
        g0 = k0 + self.origin_offset
        g1 = k1 + self.origin_offset
        key = self.key
        for b in range(g0 // BLOCK, (g1 - 1) // BLOCK + 1):
            lo = max(g0, b * BLOCK)
            hi = min(g1, (b + 1) * BLOCK)
            for c in range(self.dim):
                out[lo - g0 : hi - g0, c] = _block(key, c, b, self.delta)[lo - b * BLOCK : hi - b * BLOCK]
        return out

    def increment(self, k: int) -> np.ndarray:
        return self.increments(k, k + 1)[0]

    def value(self, t: float) -> np.ndarray:
        k = self.index(t)
        if k >= 0:
            self.check_range(0, k)
            return np.sum(self.increments(0, k), axis=0)
        self.check_range(k, 0)
        return -np.sum(self.increments(k, 0), axis=0)

    def shift(self, s: float) -> "WienerPath":
        n = self.index(s)
        lo, hi = self.window
        if not lo <= n <= hi:
            raise WindowError(f"shift {s!r} outside window [{self.t_min}, {self.t_max}]")
        if n == 0:
            return self
        return replace(self, window=(lo - n, hi - n), origin_offset=self.origin_offset + n)


# ---------- Module-level API ----------


def sample_path(seed: int, dim: int, delta: float, window: Tuple[float, float]) -> WienerPath:
    """A lazily evaluated path covering model times [window[0], window[1]]."""
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta!r}")
    if dim < 1:
        raise ValueError(f"noise dimension must be positive, got {dim}")
    t_min, t_max = window
    k_min = math.floor(t_min / delta + 1e-9)
    k_max = math.ceil(t_max / delta - 1e-9)
    if k_min > 0 or k_max < 0 or k_min > k_max:
        raise WindowError(f"window ({t_min}, {t_max}) must contain 0")
    return WienerPath(seed=int(seed) & MASK64, dim=int(dim), delta=float(delta), window=(k_min, k_max))


def shift(path: WienerPath, s: float) -> WienerPath:
    return path.shift(s)


def value(path: WienerPath, t: float) -> np.ndarray:
    return path.value(t)


def increment(path: WienerPath, k: int) -> np.ndarray:
    return path.increment(k)
