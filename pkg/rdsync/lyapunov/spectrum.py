"""
Lyapunov exponents of the discretized random flow.

spectrum_benettin co-evolves an orthonormal k-frame with the one-step
Jacobians (QR every qr_every steps); top_exponent_twopoint tracks a pair of
nearby states driven by the same path and renormalizes their separation.
Standard errors come from N_BLOCKS equal blocks of the averaging interval.
"""
from __future__ import annotations

import logging
import math
from typing import List, Optional, Sequence

import numpy as np

from rdsync.core.errors import ExplosionError, SeparationUnderflowError
from rdsync.core.models import IntegratorSpec, LogMomentReport, LyapunovSpectrum, TwoPointExponent
from rdsync.flow.cocycle import check_path, integrate, path_source, stacked_source, tangent_evolve
from rdsync.noise.wiener import WienerPath, sample_path
from rdsync.vectorfield.field import DriftField

logger = logging.getLogger(__name__)

N_BLOCKS = 20
MAX_RUNNING_ROWS = 500


def _spec_for(dt: float, spec: Optional[IntegratorSpec]) -> IntegratorSpec:
    if spec is None:
        return IntegratorSpec(dt=dt)
    return spec


def _burn_steps(T: float, burn_in: Optional[float], dt: float) -> tuple[int, int]:
    burn = T / 10.0 if burn_in is None else float(burn_in)
    if not T > burn:
        raise ValueError(f"T={T} must exceed burn_in={burn}")
    return round(burn / dt), round(T / dt)


def _advance_state(field, spec, sigma, path: WienerPath, x0, n_steps: int) -> np.ndarray:
    """State after n_steps from index 0 (burn-in segment, no frame)."""
    x = np.asarray(x0, dtype=float).reshape(1, field.dim)
    res = integrate(field, spec, sigma, x, path_source(path, 0, 1), n_steps)
    if res.exploded[0]:
        raise ExplosionError(f"{field.name}: trajectory exploded during burn-in at step {int(res.exploded_at[0])}")
    return res.end[0]


def _block_rates(times: np.ndarray, cum: np.ndarray, t0: float, t1: float, n_blocks: int) -> np.ndarray:
    """Per-block growth rates from a cumulative series sampled at `times` (first row at t0)."""
    edges = np.linspace(t0, t1, n_blocks + 1)
    idx = np.searchsorted(times, edges, side="right") - 1
    idx = np.clip(idx, 0, len(times) - 1)
    idx = np.unique(idx)
    if idx.size < 3:
        return np.empty((0,) + cum.shape[1:])
    dt = np.diff(times[idx])
    return np.diff(cum[idx], axis=0) / dt[:, None]


def _block_se(rates: np.ndarray, k: int) -> np.ndarray:
    if rates.shape[0] < 2:
        return np.zeros(k)
    return np.std(rates, axis=0, ddof=1) / math.sqrt(rates.shape[0])


def _thin_rows(rows: List[List[float]]) -> List[List[float]]:
    if len(rows) <= MAX_RUNNING_ROWS:
        return rows
    stride = -(-len(rows) // MAX_RUNNING_ROWS)
    kept = rows[::stride]
    if kept[-1] is not rows[-1]:
        kept.append(rows[-1])
    return kept


def spectrum_benettin(
    field: DriftField,
    sigma: float,
    seed: int,
    x0: Sequence[float],
    k: Optional[int] = None,
    T: float = 200.0,
    burn_in: Optional[float] = None,
    qr_every: int = 10,
    dt: float = 1e-3,
    *,
    spec: Optional[IntegratorSpec] = None,
    n_blocks: int = N_BLOCKS,
) -> LyapunovSpectrum:
    spec = _spec_for(dt, spec)
    dt = spec.dt
    d = field.dim
    k = d if k is None else int(k)
    if not 1 <= k <= d:
        raise ValueError(f"k must be in [1, {d}], got {k}")
    n_burn, n_total = _burn_steps(T, burn_in, dt)
    path = sample_path(seed, field.m, dt, (0.0, n_total * dt))
    check_path(field, spec, path)
    x_start = _advance_state(field, spec, sigma, path, x0, n_burn) if n_burn > 0 else np.asarray(x0, dtype=float)

    t_burn = n_burn * dt
    qr_times: List[float] = [t_burn]
    qr_cum: List[np.ndarray] = [np.zeros(k)]

    def record(step: int, log_r: np.ndarray) -> None:
        qr_times.append(t_burn + step * dt)
        qr_cum.append(np.array(log_r, copy=True))

    traj, frame = tangent_evolve(
        field, spec, sigma, path, x_start, k, t_burn, n_total * dt, qr_every, on_qr=record
    )
    if traj.exploded:
        raise ExplosionError(f"{field.name}: trajectory exploded at t={traj.explosion_time} (seed {seed})")

    elapsed = frame.elapsed
    exps = frame.log_r_accumulators / elapsed
    times = np.asarray(qr_times)
    cum = np.asarray(qr_cum)
    rates = _block_rates(times, cum, t_burn, t_burn + elapsed, n_blocks)
    se = _block_se(rates, k)

    order = np.argsort(-exps, kind="stable")
    running = [
        [t - t_burn] + list(c[order] / (t - t_burn)) for t, c in zip(times[1:], cum[1:]) if t > t_burn
    ]
    logger.info("benettin %s seed=%d: exponents %s", field.name, seed, np.array2string(exps[order], precision=4))
    return LyapunovSpectrum(
        exponents=[float(v) for v in exps[order]],
        block_std_errors=[float(v) for v in se[order]],
        T_effective=elapsed,
        dt=dt,
        seed=int(seed),
        x0=[float(v) for v in np.asarray(x0, dtype=float).ravel()],
        running=_thin_rows(running),
    )


def aggregate_spectra(spectra: Sequence[LyapunovSpectrum]) -> LyapunovSpectrum:
    """Replica means (in the given order) with pooled standard errors sqrt(sum se^2)/n."""
    if not spectra:
        raise ValueError("no spectra to aggregate")
    lengths = {len(s.exponents) for s in spectra}
    if len(lengths) != 1:
        raise ValueError(f"spectra have different lengths: {sorted(lengths)}")
    n = len(spectra)
    E = np.array([s.exponents for s in spectra])
    S = np.array([s.block_std_errors for s in spectra])
    mean = np.mean(E, axis=0)
    pooled = np.sqrt(np.sum(S * S, axis=0)) / n
    if n > 1:
        # never below the replica scatter
        pooled = np.maximum(pooled, np.std(E, axis=0, ddof=1) / math.sqrt(n))
    return LyapunovSpectrum(
        exponents=[float(v) for v in mean],
        block_std_errors=[float(v) for v in pooled],
        T_effective=float(sum(s.T_effective for s in spectra)),
        dt=spectra[0].dt,
        seed=spectra[0].seed,
        x0=spectra[0].x0,
        n_replicas=n,
    )


# ---------- Two-point estimator ----------

CHECK_EVERY = 10


def top_exponent_twopoint(
    field: DriftField,
    sigma: float,
    seed: int,
    x0: Sequence[float],
    delta0: float = 1e-8,
    T: float = 200.0,
    renorm_threshold: float = 10.0,
    dt: float = 1e-3,
    *,
    burn_in: Optional[float] = None,
    spec: Optional[IntegratorSpec] = None,
    n_blocks: int = N_BLOCKS,
) -> TwoPointExponent:
    """
    Separation growth of x and x + delta0*u under the shared path. The pair is
    rescaled to separation delta0 whenever sep/delta0 leaves
    [1/renorm_threshold, renorm_threshold].
    """
    if not delta0 > 0:
        raise ValueError("delta0 must be positive")
    if not renorm_threshold > 1:
        raise ValueError("renorm_threshold must exceed 1")
    spec = _spec_for(dt, spec)
    dt = spec.dt
    d = field.dim
    n_burn, n_total = _burn_steps(T, burn_in, dt)
    path = sample_path(seed, field.m, dt, (0.0, n_total * dt))
    check_path(field, spec, path)
    x = _advance_state(field, spec, sigma, path, x0, n_burn) if n_burn > 0 else np.asarray(x0, dtype=float)

    u = np.ones(d) / math.sqrt(d)
    pair = np.stack([x, x + delta0 * u])
    log_growth = 0.0
    epochs = 0
    times = [n_burn * dt]
    cum = [0.0]
    step = n_burn
    while step < n_total:
        n = min(CHECK_EVERY, n_total - step)
        res = integrate(field, spec, sigma, pair, path_source(path, step, 1), n)
        if np.any(res.exploded):
            raise ExplosionError(f"{field.name}: pair exploded near t={(step + n) * dt}")
        pair = res.end
        step += n
        diff = pair[1] - pair[0]
        if field.periodic:
            diff = np.mod(diff + np.pi, 2.0 * np.pi) - np.pi
        sep = float(np.linalg.norm(diff))
        if sep == 0.0 or not np.isfinite(sep):
            raise SeparationUnderflowError(
                f"separation collapsed to {sep} at t={step * dt}; increase delta0={delta0}"
            )
        ratio = sep / delta0
        current = log_growth + math.log(ratio)
        if ratio > renorm_threshold or ratio < 1.0 / renorm_threshold or step == n_total:
            log_growth = current
            pair = np.stack([pair[0], pair[0] + delta0 * diff / sep])
            epochs += 1
        times.append(step * dt)
        cum.append(current)

    elapsed = (n_total - n_burn) * dt
    exponent = log_growth / elapsed
    rates = _block_rates(np.asarray(times), np.asarray(cum)[:, None], n_burn * dt, n_total * dt, n_blocks)
    se = float(_block_se(rates, 1)[0])
    logger.info("two-point %s seed=%d: exponent %.6g +- %.2g (%d epochs)", field.name, seed, exponent, se, epochs)
    return TwoPointExponent(exponent=exponent, std_error=se, epochs=epochs, T_effective=elapsed)


# ---------- Integrability evidence ----------


def log_moment_estimate(
    field: DriftField,
    sigma: float,
    seed: int,
    x0: Sequence[float],
    T: float = 50.0,
    dt: float = 1e-3,
    *,
    spec: Optional[IntegratorSpec] = None,
) -> LogMomentReport:
    """Mean of log+ |D phi_1(theta_i omega, x_i)| over the unit windows of one trajectory."""
    spec = _spec_for(dt, spec)
    dt = spec.dt
    d = field.dim
    n_windows = int(math.floor(T + 1e-9))
    if n_windows < 1:
        raise ValueError("log_moment_estimate needs T >= 1")
    per = round(1.0 / dt)
    path = sample_path(seed, field.m, dt, (0.0, n_windows * per * dt))
    x = np.asarray(x0, dtype=float).reshape(1, d)
    starts = integrate(field, spec, sigma, x, path_source(path, 0, 1), n_windows * per,
                       record_steps=[i * per for i in range(n_windows)])
    X = starts.states[:, 0, :]
    windows = [path.shift(i * per * dt) for i in range(n_windows)]
    frames = np.broadcast_to(np.eye(d), (n_windows, d, d)).copy()
    res = integrate(field, spec, sigma, X, stacked_source(windows, 0, 0), per, frame0=frames, qr_every=0)
    if np.any(res.exploded) or np.any(starts.exploded):
        raise ExplosionError(f"{field.name}: trajectory exploded during the log-moment estimate")
    norms = np.linalg.norm(res.frame, ord=2, axis=(-2, -1))
    vals = np.maximum(np.log(norms), 0.0)
    se = float(np.std(vals, ddof=1) / math.sqrt(n_windows)) if n_windows > 1 else 0.0
    return LogMomentReport(mean=float(np.mean(vals)), std_error=se, n_windows=n_windows)
