"""
The numerical cocycle phi_t(omega, x) and its variational flow.

Every evolution is driven by WienerPath increments: members of an ensemble
share one path, seed sweeps stack one path per seed along a leading axis.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from rdsync.core.errors import DimensionMismatchError, GridAlignmentError, NumericRangeError, QRBreakdownError
from rdsync.core.models import IntegratorSpec
from rdsync.flow.integrators import EXPLOSION_NORM, advance
from rdsync.noise.wiener import BLOCK, WienerPath, grid_index
from rdsync.vectorfield.field import DriftField

logger = logging.getLogger(__name__)

IncrementSource = Callable[[int, int], np.ndarray]
QRCallback = Callable[[int, np.ndarray], None]


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    path_id: Tuple[int, int]
    exploded: bool = False
    explosion_time: Optional[float] = None

    @property
    def end(self) -> np.ndarray:
        return self.states[-1]

    @property
    def dim(self) -> int:
        return int(self.states.shape[-1])


@dataclass
class TangentFrame:
    frame: np.ndarray
    log_r_accumulators: np.ndarray
    elapsed: float = 0.0
    n_qr: int = 0

    def exponents(self) -> np.ndarray:
        if self.elapsed <= 0.0:
            raise ValueError("tangent frame has not been evolved")
        return self.log_r_accumulators / self.elapsed


@dataclass
class EnsembleResult:
    endpoints: np.ndarray
    exploded: np.ndarray

    @property
    def n_exploded(self) -> int:
        return int(np.count_nonzero(self.exploded))


@dataclass
class BatchResult:
    """States at recorded steps, shape (n_records, *batch, d), plus per-member explosion flags."""

    record_steps: np.ndarray
    states: np.ndarray
    exploded: np.ndarray
    exploded_at: np.ndarray
    log_r: Optional[np.ndarray] = None
    frame: Optional[np.ndarray] = None
    n_qr: int = 0

    @property
    def end(self) -> np.ndarray:
        return self.states[-1]


# ---------- Core loop ----------


def _qr_step(Q: np.ndarray, log_r: np.ndarray, step_index: int) -> Tuple[np.ndarray, np.ndarray]:
    Qn, R = np.linalg.qr(Q)
    diag = np.diagonal(R, axis1=-2, axis2=-1)
    if not np.all(np.isfinite(diag)) or np.any(diag == 0.0):
        raise QRBreakdownError("tangent frame lost rank during re-orthonormalization", step=step_index)
    signs = np.sign(diag)
    Qn = Qn * signs[..., None, :]
    return Qn, log_r + np.log(np.abs(diag))


def integrate(
    field: DriftField,
    spec: IntegratorSpec,
    sigma: float,
    x0: np.ndarray,
    increments: IncrementSource,
    n_steps: int,
    *,
    record_steps: Optional[Sequence[int]] = None,
    frame0: Optional[np.ndarray] = None,
    qr_every: int = 10,
    on_qr: Optional[QRCallback] = None,
) -> BatchResult:
    """
    Batched integration of x0 (shape (*batch, d)) over n_steps steps.

    `increments(k0, k1)` returns the noise for relative steps k0..k1-1 with
    shape (k1 - k0, ..., m), broadcastable against the batch. When `frame0`
    (shape (*batch, d, k)) is given the tangent frame is co-evolved with the
    one-step Jacobian and re-orthonormalized every `qr_every` steps
    (qr_every=0 returns the raw product of Jacobians).
    """
    x = np.array(x0, dtype=float)
    if x.ndim < 2:
        raise DimensionMismatchError("integrate expects a batch of states with shape (..., d)")
    if x.shape[-1] != field.dim:
        raise DimensionMismatchError(f"{field.name}: states have dimension {x.shape[-1]}, expected {field.dim}")
    if not np.all(np.isfinite(x)):
        raise NumericRangeError(f"{field.name}: non-finite initial state")
    if n_steps < 0:
        raise ValueError(f"negative step count {n_steps}")
    steps = np.asarray(record_steps if record_steps is not None else [n_steps], dtype=int)
    if np.any(steps < 0) or np.any(steps > n_steps) or np.any(np.diff(steps) < 0):
        raise ValueError("record steps must be sorted and within [0, n_steps]")

    batch = x.shape[:-1]
    exploded = np.zeros(batch, dtype=bool)
    exploded_at = np.full(batch, -1, dtype=int)
    out = np.empty((len(steps),) + x.shape)
    r = 0
    while r < len(steps) and steps[r] == 0:
        out[r] = x
        r += 1

    Q = None if frame0 is None else np.array(frame0, dtype=float)
    log_r = None if Q is None else np.zeros(Q.shape[:-2] + (Q.shape[-1],))
    n_qr = 0
    tangent = Q is not None

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for c0 in range(0, n_steps, BLOCK):
            c1 = min(n_steps, c0 + BLOCK)
            dW = increments(c0, c1)
            for j in range(c1 - c0):
                k = c0 + j
                live = ~exploded
                new, J = advance(field, spec, sigma, x, dW[j], with_jacobian=tangent, active=live, step_index=k)
                ok = np.all(np.isfinite(new), axis=-1) & (np.linalg.norm(new, axis=-1) <= EXPLOSION_NORM)
                blown = live & ~ok
                if np.any(blown):
                    exploded |= blown
                    exploded_at[blown] = k + 1
                    logger.warning(
                        "%s: %d member(s) exploded at step %d (t=%.6g)",
                        field.name, int(np.count_nonzero(blown)), k + 1, (k + 1) * spec.dt,
                    )
                x = np.where(exploded[..., None], x, new)
                if tangent:
                    Q = np.where(exploded[..., None, None], Q, J @ Q)
                    if qr_every > 0 and ((k + 1) % qr_every == 0 or k + 1 == n_steps):
                        if not np.all(exploded):
                            # frozen members are orthonormalized against a dummy frame
                            Qf = np.where(exploded[..., None, None], np.eye(*Q.shape[-2:]), Q)
                            Qn, log_rn = _qr_step(Qf, log_r, k + 1)
                            Q = np.where(exploded[..., None, None], Q, Qn)
                            log_r = np.where(exploded[..., None], log_r, log_rn)
                            n_qr += 1
                            logger.debug("QR re-orthonormalization at step %d", k + 1)
                            if on_qr is not None:
                                on_qr(k + 1, log_r)
                while r < len(steps) and steps[r] == k + 1:
                    out[r] = x
                    r += 1

    return BatchResult(
        record_steps=steps,
        states=out,
        exploded=exploded,
        exploded_at=exploded_at,
        log_r=log_r,
        frame=Q,
        n_qr=n_qr,
    )


# ---------- Path plumbing ----------


def check_path(field: DriftField, spec: IntegratorSpec, path: WienerPath) -> None:
    if abs(spec.dt - path.delta) > 1e-12 * path.delta:
        raise GridAlignmentError(f"integrator dt={spec.dt} must equal the noise step delta={path.delta}")
    if path.dim != field.m:
        raise DimensionMismatchError(f"{field.name} needs {field.m} noise components, path has {path.dim}")


def _step_range(path: WienerPath, t0: float, t1: float) -> Tuple[int, int]:
    k0 = path.index(t0)
    k1 = path.index(t1)
    if k1 < k0:
        raise ValueError(f"t1={t1} precedes t0={t0}")
    path.check_range(k0, k1)
    return k0, k1


def checkpoint_steps(t0: float, checkpoints: Sequence[float], delta: float) -> List[int]:
    return [grid_index(t - t0, delta) for t in checkpoints]


def path_source(path: WienerPath, k0: int, batch_ndim: int) -> IncrementSource:
    """Shared increments of one path, shaped to broadcast over `batch_ndim` leading axes."""
    pad = (1,) * batch_ndim

    def source(c0: int, c1: int) -> np.ndarray:
        inc = path.increments(k0 + c0, k0 + c1)
        return inc.reshape((c1 - c0,) + pad + (path.dim,))

    return source


def stacked_source(paths: Sequence[WienerPath], k0: int, member_ndim: int) -> IncrementSource:
    """One path per entry of the leading batch axis; shared across `member_ndim` further axes."""
    pad = (1,) * member_ndim

    def source(c0: int, c1: int) -> np.ndarray:
        inc = np.stack([p.increments(k0 + c0, k0 + c1) for p in paths], axis=1)
        return inc.reshape((c1 - c0, len(paths)) + pad + (inc.shape[-1],))

    return source


# ---------- Operations ----------


def evolve(
    field: DriftField,
    spec: IntegratorSpec,
    sigma: float,
    path: WienerPath,
    x0: Sequence[float],
    t0: float,
    t1: float,
    *,
    record_every: int = 1,
) -> Trajectory:
    check_path(field, spec, path)
    k0, k1 = _step_range(path, t0, t1)
    n = k1 - k0
    steps = list(range(0, n + 1, max(1, record_every)))
    if steps[-1] != n:
        steps.append(n)
    x = np.asarray(x0, dtype=float).reshape(1, field.dim)
    res = integrate(field, spec, sigma, x, path_source(path, k0, 1), n, record_steps=steps)
    times = t0 + np.asarray(steps, dtype=float) * spec.dt
    states = res.states[:, 0, :]
    path_id = (path.seed, path.origin_offset)
    if res.exploded[0]:
        at = int(res.exploded_at[0])
        keep = np.asarray(steps) < at
        return Trajectory(times[keep], states[keep], path_id, exploded=True, explosion_time=t0 + at * spec.dt)
    return Trajectory(times, states, path_id)


def evolve_ensemble(
    field: DriftField,
    spec: IntegratorSpec,
    sigma: float,
    path: WienerPath,
    X0: Sequence[Sequence[float]],
    t0: float,
    t1: float,
) -> EnsembleResult:
    """All members driven by the identical path."""
    check_path(field, spec, path)
    k0, k1 = _step_range(path, t0, t1)
    X = np.asarray(X0, dtype=float).reshape(-1, field.dim)
    res = integrate(field, spec, sigma, X, path_source(path, k0, 1), k1 - k0)
    return EnsembleResult(endpoints=res.end, exploded=res.exploded)


def evolve_seeds(
    field: DriftField,
    spec: IntegratorSpec,
    sigma: float,
    paths: Sequence[WienerPath],
    X0: np.ndarray,
    t0: float,
    t1: float,
    checkpoints: Optional[Sequence[float]] = None,
) -> BatchResult:
    """
    Seed sweep in one batch: X0 has shape (n_members, d) (same starts for every
    path) or (n_paths, n_members, d). Returned states have shape
    (n_checkpoints, n_paths, n_members, d).
    """
    if not paths:
        raise ValueError("evolve_seeds needs at least one path")
    for p in paths:
        check_path(field, spec, p)
    k0, k1 = _step_range(paths[0], t0, t1)
    for p in paths[1:]:
        _step_range(p, t0, t1)
    X = np.asarray(X0, dtype=float)
    if X.ndim == 2:
        X = np.broadcast_to(X, (len(paths),) + X.shape).copy()
    if X.ndim != 3 or X.shape[0] != len(paths):
        raise DimensionMismatchError(f"evolve_seeds: starts have shape {X.shape}")
    cps = list(checkpoints) if checkpoints is not None else [t1]
    steps = checkpoint_steps(t0, cps, spec.dt)
    return integrate(field, spec, sigma, X, stacked_source(paths, k0, 1), k1 - k0, record_steps=steps)


def tangent_evolve(
    field: DriftField,
    spec: IntegratorSpec,
    sigma: float,
    path: WienerPath,
    x0: Sequence[float],
    k: int,
    t0: float,
    t1: float,
    qr_every: int = 10,
    *,
    on_qr: Optional[QRCallback] = None,
    frame0: Optional[np.ndarray] = None,
) -> Tuple[Trajectory, TangentFrame]:
    """
    Co-evolve x and a k-frame under the one-step Jacobian. log_r_accumulators
    holds the running sums of log R_ii over all QR steps.
    """
    d = field.dim
    if not 1 <= k <= d:
        raise ValueError(f"frame size k must be in [1, {d}], got {k}")
    check_path(field, spec, path)
    k0, k1 = _step_range(path, t0, t1)
    n = k1 - k0
    x = np.asarray(x0, dtype=float).reshape(1, d)
    Q0 = np.eye(d)[:, :k] if frame0 is None else np.asarray(frame0, dtype=float)
    res = integrate(
        field, spec, sigma, x, path_source(path, k0, 1), n,
        record_steps=[0, n], frame0=Q0[None, ...], qr_every=qr_every,
        on_qr=(lambda s, lr: on_qr(s, lr[0])) if on_qr is not None else None,
    )
    path_id = (path.seed, path.origin_offset)
    exploded = bool(res.exploded[0])
    traj = Trajectory(
        times=np.array([t0, t1]),
        states=res.states[:, 0, :],
        path_id=path_id,
        exploded=exploded,
        explosion_time=(t0 + int(res.exploded_at[0]) * spec.dt) if exploded else None,
    )
    frame = TangentFrame(
        frame=res.frame[0],
        log_r_accumulators=res.log_r[0],
        elapsed=n * spec.dt,
        n_qr=res.n_qr,
    )
    return traj, frame


def pullback_evolve(
    field: DriftField,
    spec: IntegratorSpec,
    sigma: float,
    path: WienerPath,
    x0: Sequence[float],
    t: float,
) -> np.ndarray:
    """phi_t(theta_{-t} omega, x0)."""
    if t < 0:
        raise ValueError(f"pullback time must be non-negative, got {t}")
    shifted = path.shift(-t)
    return evolve_ensemble(field, spec, sigma, shifted, [x0], 0.0, t).endpoints[0]
