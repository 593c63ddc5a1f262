"""
One-step maps of dX = b(X)dt + sigma dW and their Jacobians.

All functions act on batches: x has shape (..., d) and dW has shape (..., m),
broadcastable against the leading axes of x.
"""
from __future__ import annotations

import logging
from typing import Optional, Tuple

import numpy as np

from rdsync.core.enums import Scheme
from rdsync.core.errors import NewtonDivergenceError, NumericRangeError
from rdsync.core.models import IntegratorSpec
from rdsync.vectorfield.field import DriftField, fd_jacobian

logger = logging.getLogger(__name__)

# states above this norm count as exploded
EXPLOSION_NORM = 1e8
TWO_PI = 2.0 * np.pi


def _jac(field: DriftField, x: np.ndarray) -> np.ndarray:
    if field.jacobian is not None:
        return np.asarray(field.jacobian(x), dtype=float)
    return fd_jacobian(field.drift, x)


def _noise(field: DriftField, sigma: float, x: np.ndarray, dW: np.ndarray) -> np.ndarray:
    if field.diffusion is None:
        return sigma * dW
    G = field.diffusion(x)  # (..., d, m)
    return sigma * np.sum(G * dW[..., None, :], axis=-1)


def _noise_jacobian(field: DriftField, sigma: float, x: np.ndarray, dW: np.ndarray) -> Optional[np.ndarray]:
    if field.diffusion_jacobian is None:
        return None
    DG = field.diffusion_jacobian(x)  # (..., d, m, d)
    return sigma * np.sum(DG * dW[..., None, :, None], axis=-2)


# ---------- Deterministic parts ----------


def _tamed(field: DriftField, dt: float, x: np.ndarray, with_jacobian: bool):
    b = field.drift(x)
    n = np.linalg.norm(b, axis=-1)
    scale = 1.0 / (1.0 + dt * n)
    y = x + dt * b * scale[..., None]
    if not with_jacobian:
        return y, None
    Db = _jac(field, x)
    d = x.shape[-1]
    # grad |b| = Db^T b / |b|; the correction vanishes where b = 0
    safe_n = np.where(n > 0.0, n, 1.0)
    grad_n = np.einsum("...ji,...j->...i", Db, b) / safe_n[..., None]
    grad_n = np.where((n > 0.0)[..., None], grad_n, 0.0)
    corr = dt * (scale * scale)[..., None, None] * (b[..., :, None] * grad_n[..., None, :])
    J = np.eye(d) + dt * (Db * scale[..., None, None] - corr)
    return y, J


def newton_solve(
    field: DriftField,
    spec: IntegratorSpec,
    x: np.ndarray,
    active: Optional[np.ndarray] = None,
    step_index: Optional[int] = None,
) -> Tuple[np.ndarray, int]:
    """Solve y = x + dt b(y) by Newton's method started at y = x. Returns (y, iterations)."""
    dt = spec.dt
    d = x.shape[-1]
    eye = np.eye(d)
    if active is None:
        active = np.ones(x.shape[:-1], dtype=bool)
    y = x.copy()
    res_max = np.inf
    for it in range(spec.newton_max_iter + 1):
        F = y - x - dt * field.drift(y)
        res = np.max(np.abs(F), axis=-1)
        finite = np.isfinite(res)
        live = active & finite
        tol = spec.newton_tol * (1.0 + np.max(np.abs(y), axis=-1))
        unconverged = live & (res > tol)
        if not np.any(unconverged):
            logger.debug("newton converged in %d iterations", it)
            return y, it
        res_max = float(np.max(res[unconverged]))
        if it == spec.newton_max_iter:
            break
        J = eye - dt * _jac(field, y)
        # frozen or non-finite members get an identity system and a zero update
        J = np.where(live[..., None, None], J, eye)
        F = np.where(live[..., None], F, 0.0)
        try:
            upd = np.linalg.solve(J, F[..., None])[..., 0]
        except np.linalg.LinAlgError as e:
            raise NewtonDivergenceError(
                f"singular Newton system (dt={dt} too large for the drift)", step=step_index
            ) from e
        y = y - upd
    raise NewtonDivergenceError(
        f"Newton did not converge in {spec.newton_max_iter} iterations (residual {res_max:.3e}); "
        f"dt={dt} is too large for the drift's stiffness",
        step=step_index,
        residual=res_max,
    )


def advance(
    field: DriftField,
    spec: IntegratorSpec,
    sigma: float,
    x: np.ndarray,
    dW: np.ndarray,
    *,
    with_jacobian: bool = False,
    active: Optional[np.ndarray] = None,
    step_index: Optional[int] = None,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """One step of the configured scheme; optionally the Jacobian of the one-step map at x."""
    dt = spec.dt
    J: Optional[np.ndarray] = None
    if spec.scheme == Scheme.EULER_MARUYAMA:
        y = x + dt * field.drift(x)
        if with_jacobian:
            J = np.eye(x.shape[-1]) + dt * _jac(field, x)
    elif spec.scheme == Scheme.TAMED_EULER:
        y, J = _tamed(field, dt, x, with_jacobian)
    elif spec.scheme == Scheme.SPLIT_STEP_IMPLICIT:
        y, _ = newton_solve(field, spec, x, active=active, step_index=step_index)
        if with_jacobian:
            M = np.eye(x.shape[-1]) - dt * _jac(field, y)
            try:
                J = np.linalg.inv(M)
            except np.linalg.LinAlgError as e:
                raise NewtonDivergenceError("singular implicit-step Jacobian", step=step_index) from e
    else:
        raise ValueError(f"Unknown scheme: {spec.scheme}")

    y = y + _noise(field, sigma, x, dW)
    if with_jacobian:
        NJ = _noise_jacobian(field, sigma, x, dW)
        if NJ is not None:
            J = J + NJ
    if field.periodic:
        y = np.mod(y, TWO_PI)
    return y, J


# ---------- Public single-step API ----------


def _checked(x: np.ndarray, dW: np.ndarray, field: DriftField) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    dW = np.asarray(dW, dtype=float)
    if x.shape[-1] != field.dim:
        raise ValueError(f"{field.name}: state has dimension {x.shape[-1]}, expected {field.dim}")
    if dW.shape[-1] != field.m:
        raise ValueError(f"{field.name}: noise increment has dimension {dW.shape[-1]}, expected {field.m}")
    if not np.all(np.isfinite(x)):
        raise NumericRangeError(f"{field.name}: step called on a non-finite state")
    return x, dW


def step(field: DriftField, spec: IntegratorSpec, x: np.ndarray, dW: np.ndarray, sigma: float = 1.0) -> np.ndarray:
    x, dW = _checked(x, dW, field)
    with np.errstate(over="ignore", invalid="ignore"):
        y, _ = advance(field, spec, sigma, x, dW)
    return y


def step_jacobian(
    field: DriftField,
    spec: IntegratorSpec,
    x: np.ndarray,
    dW: Optional[np.ndarray] = None,
    sigma: float = 1.0,
) -> np.ndarray:
    """Jacobian of the discrete one-step map x -> step(x, dW)."""
    if dW is None:
        dW = np.zeros(field.m)
    x, dW = _checked(x, dW, field)
    with np.errstate(over="ignore", invalid="ignore"):
        _, J = advance(field, spec, sigma, x, dW, with_jacobian=True)
    return J
