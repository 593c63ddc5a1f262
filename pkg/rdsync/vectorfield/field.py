from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from rdsync.core.errors import DimensionMismatchError, EigenSolverError, NumericRangeError

logger = logging.getLogger(__name__)

ArrayFn = Callable[[np.ndarray], np.ndarray]

# central-difference step for gradients and Jacobians
FD_STEP = 1e-5


@dataclass(frozen=True)
class DriftField:
    """
    Drift b of dX = b(X)dt + sigma dW on R^d (or on the angle chart of S^1).

    All callables are vectorised over leading axes:
      drift:     (..., d)  -> (..., d)
      jacobian:  (..., d)  -> (..., d, d)
      potential: (..., d)  -> (...)
      hessian:   (..., d)  -> (..., d, d)
      diffusion: (..., d)  -> (..., d, m)      angle chart only
      diffusion_jacobian: (..., d) -> (..., d, m, d)
    """

    name: str
    dim: int
    drift: ArrayFn
    jacobian: Optional[ArrayFn] = None
    potential: Optional[ArrayFn] = None
    hessian: Optional[ArrayFn] = None
    one_sided_constant: Optional[float] = None
    noise_dim: Optional[int] = None
    diffusion: Optional[ArrayFn] = None
    diffusion_jacobian: Optional[ArrayFn] = None
    periodic: bool = False

    @property
    def is_gradient(self) -> bool:
        return self.potential is not None

    @property
    def m(self) -> int:
        return self.noise_dim if self.noise_dim is not None else self.dim


def _as_points(field: DriftField, x: np.ndarray) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.shape[-1] != field.dim:
        raise DimensionMismatchError(
            f"{field.name}: point has dimension {arr.shape[-1]}, field dimension is {field.dim}"
        )
    if not np.all(np.isfinite(arr)):
        raise NumericRangeError(f"{field.name}: non-finite input point")
    return arr


def _check_finite(field: DriftField, out: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(out)):
        raise NumericRangeError(f"{field.name}: {what} overflowed to a non-finite value")
    return out


def eval_drift(field: DriftField, x: np.ndarray) -> np.ndarray:
    pts = _as_points(field, x)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.asarray(field.drift(pts), dtype=float)
    return _check_finite(field, out, "drift")


def fd_jacobian(drift: ArrayFn, x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central-difference Jacobian; column j is (b(x+h e_j) - b(x-h e_j)) / 2h."""
    d = x.shape[-1]
    cols = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        cols.append((drift(x + e) - drift(x - e)) / (2.0 * h))
    return np.stack(cols, axis=-1)


def fd_gradient(potential: ArrayFn, x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    d = x.shape[-1]
    comps = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        comps.append((potential(x + e) - potential(x - e)) / (2.0 * h))
    return np.stack(comps, axis=-1)


def eval_jacobian(field: DriftField, x: np.ndarray) -> np.ndarray:
    """Analytic Db when the field provides one, else central differences with step FD_STEP."""
    pts = _as_points(field, x)
    with np.errstate(over="ignore", invalid="ignore"):
        if field.jacobian is not None:
            out = np.asarray(field.jacobian(pts), dtype=float)
        else:
            out = fd_jacobian(field.drift, pts)
    return _check_finite(field, out, "jacobian")


def _symmetric_eigenvalues(field: DriftField, x: np.ndarray) -> np.ndarray:
    jac = eval_jacobian(field, x)
    sym = 0.5 * (jac + np.swapaxes(jac, -1, -2))
    try:
        return np.linalg.eigvalsh(sym)
    except np.linalg.LinAlgError as e:
        raise EigenSolverError(f"{field.name}: eigenvalue solver did not converge: {e}") from e


def lambda_plus(field: DriftField, x: np.ndarray) -> np.ndarray | float:
    """Largest eigenvalue of the symmetric part of Db(x), i.e. max_{|r|=1} (Db(x) r, r)."""
    ev = _symmetric_eigenvalues(field, x)
    out = ev[..., -1]
    return float(out) if np.ndim(out) == 0 else out


def lambda_minus(field: DriftField, x: np.ndarray) -> np.ndarray | float:
    ev = _symmetric_eigenvalues(field, x)
    out = ev[..., 0]
    return float(out) if np.ndim(out) == 0 else out


# ---------- Invariant checks ----------


def _sample_box(dim: int, n: int, box: Tuple[float, float], seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    lo, hi = box
    return rng.uniform(lo, hi, size=(n, dim))


def gradient_consistency(
    field: DriftField,
    *,
    n: int = 1000,
    box: Tuple[float, float] = (-3.0, 3.0),
    seed: int = 0,
) -> float:
    """max_x |b(x) + grad_FD V(x)|_inf over n uniform samples in box^d."""
    if field.potential is None:
        raise ValueError(f"{field.name} has no potential")
    x = _sample_box(field.dim, n, box, seed)
    grad = fd_gradient(field.potential, x)
    return float(np.max(np.abs(eval_drift(field, x) + grad)))


def symmetry_defect(
    field: DriftField,
    *,
    n: int = 1000,
    box: Tuple[float, float] = (-3.0, 3.0),
    seed: int = 0,
) -> float:
    """max_x ||Db(x) - Db(x)^T||_inf; zero up to rounding for gradient fields."""
    x = _sample_box(field.dim, n, box, seed)
    jac = eval_jacobian(field, x)
    return float(np.max(np.abs(jac - np.swapaxes(jac, -1, -2))))


def hessian_defect(
    field: DriftField,
    *,
    n: int = 1000,
    box: Tuple[float, float] = (-3.0, 3.0),
    seed: int = 0,
) -> float:
    """max_x |Db(x) + D^2V(x)|_inf for fields declaring both."""
    if field.hessian is None:
        raise ValueError(f"{field.name} has no hessian")
    x = _sample_box(field.dim, n, box, seed)
    return float(np.max(np.abs(eval_jacobian(field, x) + field.hessian(x))))
