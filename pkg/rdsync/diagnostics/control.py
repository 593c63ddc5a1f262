"""
Deterministic controls that witness positive-probability events.

swift_control steers B(x, r) onto B(x + z, delta) along psi(t) = x + (t/t0) z
with the control f(t) = (psi(t) - x - int_0^t b(psi(s)) ds) / sigma.
contraction_witness freezes z with omega0(t) = -t b(z) / sigma and measures
how much the ball B(z, R) shrinks by the time e^{-c T0} = 1/9.
"""
from __future__ import annotations

import logging
import math
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from rdsync.core.enums import Scheme
from rdsync.core.errors import ControlResidualError, FieldDefinitionError, ProofHypothesisError
from rdsync.core.models import ContractionWitnessReport, IntegratorSpec, SwiftControlReport
from rdsync.diagnostics.conditions import contraction_rate
from rdsync.diagnostics.mesh import ball_mesh
from rdsync.flow.cocycle import integrate
from rdsync.vectorfield.field import DriftField, eval_drift

logger = logging.getLogger(__name__)

DRIFT_SAMPLES = 4096
WITNESS_DT = 1e-3


def _require_controllable(field: DriftField, sigma: float) -> None:
    if field.periodic or field.diffusion is not None:
        raise FieldDefinitionError(f"{field.name}: controls are defined for additive noise on R^d only")
    if not sigma > 0:
        raise ValueError("a control needs sigma > 0")


def drift_bound(field: DriftField, x: np.ndarray, radius: float, n: int = DRIFT_SAMPLES) -> float:
    """Sampled sup of |b| over B(x, radius); a lower estimate of the true sup."""
    pts = ball_mesh(x, radius, n)
    return float(np.max(np.linalg.norm(eval_drift(field, pts), axis=-1)))


def swift_control(
    field: DriftField,
    sigma: float,
    x: Sequence[float],
    r: float,
    z: Sequence[float],
    t0: Optional[float] = None,
    delta: float = 0.1,
    *,
    mesh_n: int = 32,
    n_steps: int = 400,
    tolerance: Optional[float] = None,
) -> SwiftControlReport:
    _require_controllable(field, sigma)
    x = np.asarray(x, dtype=float).ravel()
    z = np.asarray(z, dtype=float).ravel()
    d = field.dim
    if x.size != d or z.size != d:
        raise ValueError(f"x and z must have dimension {d}")
    if r < 0 or not delta > 0:
        raise ValueError("need r >= 0 and delta > 0")
    if n_steps < 2:
        raise ValueError("n_steps must be >= 2")

    B = drift_bound(field, x, r + float(np.linalg.norm(z)) + 1.0)
    bound = min(min(delta, 1.0) / (4.0 * B), 1.0) if B > 0 else 1.0
    if t0 is None:
        t0 = bound
    if t0 > bound:
        raise ProofHypothesisError(f"t0={t0:.6g} exceeds the admissible horizon {bound:.6g} (sup|b| ~ {B:.6g})")
    if not t0 > 0:
        raise ValueError("t0 must be positive")

    dt = t0 / n_steps
    times = np.arange(n_steps + 1) * dt
    times[-1] = t0
    psi = x + (times / t0)[:, None] * z
    drift_integral = cumulative_trapezoid(eval_drift(field, psi), times, axis=0, initial=0.0)
    f = (psi - x - drift_integral) / sigma
    df = np.diff(f, axis=0)

    starts = np.concatenate([x[None, :], ball_mesh(x, r, mesh_n)])
    spec = IntegratorSpec(scheme=Scheme.EULER_MARUYAMA, dt=dt)

    def source(c0: int, c1: int) -> np.ndarray:
        return df[c0:c1].reshape(c1 - c0, 1, d)

    res = integrate(field, spec, sigma, starts, source, n_steps)
    ends = res.end
    errors = np.linalg.norm(ends - (starts + z), axis=-1)
    errors = np.where(res.exploded, np.inf, errors)
    residual = float(errors[0])
    landing = errors[1:]
    all_landed = bool(np.all(landing <= delta))
    logger.info(
        "swift_control %s: t0=%.4g (bound %.4g), residual=%.3g, landed %d/%d",
        field.name, t0, bound, residual, int(np.count_nonzero(landing <= delta)), landing.size,
    )
    tol = delta if tolerance is None else tolerance
    if not residual <= tol:
        raise ControlResidualError(f"control residual {residual:.6g} above tolerance {tol:.6g}")
    return SwiftControlReport(
        times=times.tolist(),
        control=f.tolist(),
        residual=residual,
        t0=float(t0),
        t0_bound=float(bound),
        drift_bound=B,
        dt=dt,
        landing_errors=landing.tolist(),
        all_landed=all_landed,
    )


def contraction_witness(
    field: DriftField,
    sigma: float,
    R: float,
    z: Sequence[float],
    c_estimate: Optional[float] = None,
    *,
    mesh_n: int = 32,
    n_pairs: int = 20_000,
    seed: int = 0,
) -> ContractionWitnessReport:
    """
    Drive a mesh of B(z, R) with the control that keeps z fixed for T0 = ln 9 / c
    and report the endpoint diameter over 2R. A ratio above 1/4 is reported,
    not raised: it usually means c_estimate was too optimistic.
    """
    _require_controllable(field, sigma)
    zc = np.asarray(z, dtype=float).ravel()
    d = field.dim
    if zc.size != d:
        raise ValueError(f"z has dimension {zc.size}, field has {d}")
    if not R > 0:
        raise ValueError("R must be positive")
    c = contraction_rate(field, zc, R, n_pairs=n_pairs, seed=seed) if c_estimate is None else float(c_estimate)
    if not c > 0:
        raise ProofHypothesisError(f"{field.name} is not contracting on B({zc.tolist()}, {2 * R}): c={c:.6g}")

    T0 = math.log(9.0) / c
    n_steps = max(1, math.ceil(T0 / WITNESS_DT))
    dt = T0 / n_steps
    spec = IntegratorSpec(scheme=Scheme.EULER_MARUYAMA, dt=dt)
    dW = (-eval_drift(field, zc) * dt / sigma).reshape(1, 1, d)

    def source(c0: int, c1: int) -> np.ndarray:
        return np.broadcast_to(dW, (c1 - c0, 1, d))

    mesh = ball_mesh(zc, R, mesh_n)
    res = integrate(field, spec, sigma, mesh, source, n_steps)
    ends = res.end[~res.exploded]
    if ends.shape[0] < mesh.shape[0]:
        ratio = float("inf")
    elif ends.shape[0] < 2:
        ratio = 0.0
    else:
        diff = ends[:, None, :] - ends[None, :, :]
        ratio = float(np.max(np.sqrt(np.sum(diff * diff, axis=-1)))) / (2.0 * R)
    ok = ratio <= 0.25
    if not ok:
        logger.warning("contraction witness failed on B(%s, %g): ratio %.4g > 1/4 (c=%.4g)", zc.tolist(), R, ratio, c)
    return ContractionWitnessReport(T0=T0, ratio=ratio, c_estimate=c, mesh_n=mesh.shape[0], witness_ok=ok)
