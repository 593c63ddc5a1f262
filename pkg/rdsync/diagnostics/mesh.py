"""
Low-discrepancy point sets in balls.

ball_mesh(center, radius, n) returns the center alone for n = 1. Otherwise
ceil(n/2) points lie on the sphere |x - center| = radius and the rest in the
open ball. Both halves come from an unscrambled Halton sequence (first point
skipped): sphere directions are normal quantiles of d Halton coordinates,
normalized; interior points take the radius radius * u^(1/d) from one extra
coordinate. In d = 1 the sphere is {center - radius, center + radius}.
"""
from __future__ import annotations

import numpy as np
from scipy.stats import norm, qmc


def _halton(d: int, n: int) -> np.ndarray:
    engine = qmc.Halton(d=d, scramble=False)
    engine.fast_forward(1)
    return engine.random(n)


def _directions(u: np.ndarray) -> np.ndarray:
    g = norm.ppf(np.clip(u, 1e-12, 1.0 - 1e-12))
    n = np.linalg.norm(g, axis=-1, keepdims=True)
    n = np.where(n > 0.0, n, 1.0)
    return g / n


def sphere_points(d: int, n: int) -> np.ndarray:
    if n <= 0:
        return np.empty((0, d))
    if d == 1:
        return np.where(np.arange(n)[:, None] % 2 == 0, 1.0, -1.0)
    return _directions(_halton(d, n))


def interior_points(d: int, n: int) -> np.ndarray:
    if n <= 0:
        return np.empty((0, d))
    u = _halton(d + 1, n)
    if d == 1:
        return (2.0 * u[:, :1] - 1.0) * (1.0 - 1e-12)
    r = u[:, :1] ** (1.0 / d)
    return r * _directions(u[:, 1:])


def ball_mesh(center, radius: float, n: int) -> np.ndarray:
    c = np.asarray(center, dtype=float).ravel()
    if n < 1:
        raise ValueError(f"mesh size must be positive, got {n}")
    if radius < 0:
        raise ValueError(f"radius must be non-negative, got {radius}")
    if n == 1:
        return c[None, :].copy()
    d = c.size
    n_sphere = -(-n // 2)
    unit = np.concatenate([sphere_points(d, n_sphere), interior_points(d, n - n_sphere)])
    return c + radius * unit
