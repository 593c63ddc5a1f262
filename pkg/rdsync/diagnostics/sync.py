"""
Ensemble synchronization statistics.

Each seed drives all members with one shared path. Per checkpoint the
reports carry distance quantiles over the non-exploded seeds and the
exceedance probability P[d > epsilon] with a Wilson 95% interval.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import binomtest

from rdsync.core.models import ExceedRow, IntegratorSpec, QuantileRow, SyncReport
from rdsync.diagnostics.clustering import wrapped_difference
from rdsync.diagnostics.mesh import ball_mesh
from rdsync.flow.cocycle import evolve_ensemble, evolve_seeds
from rdsync.noise.seeds import derive_seed
from rdsync.noise.wiener import sample_path
from rdsync.orchestration.executor import SeedSweepExecutor
from rdsync.vectorfield.field import DriftField

logger = logging.getLogger(__name__)

QUANTILES = (0.05, 0.25, 0.50, 0.75, 0.95)
SEED_BATCH = 50


def _seed_list(seed: int, n_seeds: int, seeds: Optional[Sequence[int]]) -> List[int]:
    if seeds is not None:
        return [int(s) for s in seeds]
    return [derive_seed(seed, i) for i in range(n_seeds)]


def _pairwise_max(states: np.ndarray, periodic: bool) -> np.ndarray:
    """max_{i,j} |x_i - x_j| over the member axis (-2); states (..., n, d)."""
    a = states[..., :, None, :]
    b = states[..., None, :, :]
    diff = wrapped_difference(a, b) if periodic else a - b
    return np.max(np.sqrt(np.sum(diff * diff, axis=-1)), axis=(-2, -1))


def _quantile_row(values: np.ndarray) -> QuantileRow:
    if values.size == 0:
        nan = float("nan")
        return QuantileRow(q05=nan, q25=nan, q50=nan, q75=nan, q95=nan, max=nan, min=nan)
    q = np.quantile(values, QUANTILES)
    return QuantileRow(
        q05=float(q[0]), q25=float(q[1]), q50=float(q[2]), q75=float(q[3]), q95=float(q[4]),
        max=float(np.max(values)), min=float(np.min(values)),
    )


def wilson_row(k: int, n: int) -> ExceedRow:
    if n == 0:
        return ExceedRow(p=0.0, ci_low=0.0, ci_high=1.0)
    ci = binomtest(k, n).proportion_ci(confidence_level=0.95, method="wilson")
    p = k / n
    return ExceedRow(p=p, ci_low=float(min(ci.low, p)), ci_high=float(max(ci.high, p)))


def build_report(
    statistic: str,
    checkpoints: Sequence[float],
    distances: np.ndarray,
    exploded: np.ndarray,
    epsilon: float,
    config_hash: Optional[str] = None,
    seed_failures: Optional[Dict[str, str]] = None,
) -> SyncReport:
    """distances: (n_checkpoints, n_seeds); exploded seeds are excluded and counted."""
    keep = ~np.asarray(exploded, dtype=bool)
    d = np.asarray(distances)[:, keep]
    n = int(d.shape[1])
    rows = [_quantile_row(d[i]) for i in range(d.shape[0])]
    exceed = [wilson_row(int(np.count_nonzero(d[i] > epsilon)), n) for i in range(d.shape[0])]
    final_below = float(np.mean(d[-1] < epsilon)) if n > 0 and d.shape[0] > 0 else None
    return SyncReport(
        statistic=statistic,
        checkpoints=[float(t) for t in checkpoints],
        distance_quantiles=rows,
        exceed_prob=exceed,
        ensemble_size=n,
        n_exploded=int(np.count_nonzero(~keep)),
        epsilon=float(epsilon),
        config_hash=config_hash,
        final_fraction_below=final_below,
        seed_failures=dict(seed_failures or {}),
    )


def _default_checkpoints(T: float, checkpoints: Optional[Sequence[float]]) -> List[float]:
    if checkpoints:
        cps = sorted(float(t) for t in checkpoints)
        if cps[-1] > T:
            raise ValueError(f"checkpoint {cps[-1]} beyond T={T}")
        return cps
    return [T]


def _sweep_distances(
    field: DriftField,
    spec: IntegratorSpec,
    sigma: float,
    X0: np.ndarray,
    T: float,
    seeds: List[int],
    checkpoints: List[float],
    n_workers: int,
) -> Tuple[np.ndarray, np.ndarray, Dict[str, str]]:
    """
    Max pairwise member distance per (checkpoint, seed), seeds batched across
    workers. A failing batch is rerun seed by seed; seeds that still fail are
    left out of the distances and returned as {seed: "ErrorType: message"}.
    """
    batches = [seeds[i : i + SEED_BATCH] for i in range(0, len(seeds), SEED_BATCH)]

    def run(batch: List[int]):
        paths = [sample_path(s, field.m, spec.dt, (0.0, T)) for s in batch]
        res = evolve_seeds(field, spec, sigma, paths, X0, 0.0, T, checkpoints=checkpoints)
        dist = _pairwise_max(res.states, field.periodic)  # (C, S)
        return dist, np.any(res.exploded, axis=-1)

    executor = SeedSweepExecutor(n_workers)
    parts = []
    failures: Dict[str, str] = {}
    for batch, outcome in zip(batches, executor.map(run, batches)):
        if outcome.ok:
            parts.append(outcome.value)
            continue
        logger.warning("batch of %d seeds failed (%s); rerunning seed by seed", len(batch), outcome.error)
        for seed, single in zip(batch, executor.map(run, [[s] for s in batch])):
            if single.ok:
                parts.append(single.value)
            else:
                failures[str(seed)] = f"{type(single.exception).__name__}: {single.error}"
    if not parts:
        return np.empty((len(checkpoints), 0)), np.zeros(0, dtype=bool), failures
    dist = np.concatenate([p[0] for p in parts], axis=1)
    exploded = np.concatenate([p[1] for p in parts])
    return dist, exploded, failures


def two_point_sync(
    field: DriftField,
    sigma: float,
    x: Sequence[float],
    y: Sequence[float],
    T: float,
    n_seeds: int,
    checkpoints: Optional[Sequence[float]] = None,
    epsilon: float = 0.05,
    *,
    seed: int = 0,
    seeds: Optional[Sequence[int]] = None,
    spec: Optional[IntegratorSpec] = None,
    n_workers: int = 1,
    config_hash: Optional[str] = None,
) -> SyncReport:
    spec = spec or IntegratorSpec()
    seed_list = _seed_list(seed, n_seeds, seeds)
    if not seed_list:
        raise ValueError("two_point_sync needs at least one seed")
    if len(seed_list) < 30:
        logger.warning("two_point_sync with %d seeds: Wilson intervals are unreliable below 30", len(seed_list))
    cps = _default_checkpoints(T, checkpoints)
    X0 = np.stack([np.asarray(x, dtype=float), np.asarray(y, dtype=float)])
    dist, exploded, failures = _sweep_distances(field, spec, sigma, X0, T, seed_list, cps, n_workers)
    logger.info(
        "two_point_sync %s sigma=%g: %d seeds, %d exploded, %d failed",
        field.name, sigma, len(seed_list), int(exploded.sum()), len(failures),
    )
    return build_report("two_point_distance", cps, dist, exploded, epsilon, config_hash, failures)


def ball_diameter(
    field: DriftField,
    sigma: float,
    center: Sequence[float],
    radius: float,
    mesh_n: int,
    T: float,
    n_seeds: int,
    checkpoints: Optional[Sequence[float]] = None,
    epsilon: float = 0.05,
    *,
    seed: int = 0,
    seeds: Optional[Sequence[int]] = None,
    spec: Optional[IntegratorSpec] = None,
    n_workers: int = 1,
    config_hash: Optional[str] = None,
) -> SyncReport:
    """
    diam(phi_t(., mesh of B(center, radius))) per checkpoint and seed. The
    statistic addresses asymptotic stability on the ball (positive-probability
    contraction), not the weaker measure-based notion.
    """
    spec = spec or IntegratorSpec()
    seed_list = _seed_list(seed, n_seeds, seeds)
    if not seed_list:
        raise ValueError("ball_diameter needs at least one seed")
    cps = _default_checkpoints(T, checkpoints)
    X0 = ball_mesh(center, radius, mesh_n)
    dist, exploded, failures = _sweep_distances(field, spec, sigma, X0, T, seed_list, cps, n_workers)
    return build_report("ball_diameter", cps, dist, exploded, epsilon, config_hash, failures)


def write_sync_csv(report: SyncReport, path: Union[str, Path]) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["t", "q05", "q25", "q50", "q75", "q95", "exceed_prob"])
        for t, q, e in zip(report.checkpoints, report.distance_quantiles, report.exceed_prob):
            w.writerow([repr(t), repr(q.q05), repr(q.q25), repr(q.q50), repr(q.q75), repr(q.q95), repr(e.p)])
    return out


# ---------- Pullback ----------


@dataclass
class PullbackEnsemble:
    """Endpoints phi_t(theta_{-t} omega, x) for one omega, keyed by t."""

    seed: int
    init: np.ndarray
    t_list: List[float]
    endpoints: Dict[float, np.ndarray] = dc_field(default_factory=dict)
    exploded: Dict[float, int] = dc_field(default_factory=dict)

    def max_pairwise_distance(self, t: float, periodic: bool = False) -> float:
        pts = self.endpoints[t]
        if pts.shape[0] < 2:
            return 0.0
        return float(_pairwise_max(pts, periodic))


def pullback_ensemble(
    field: DriftField,
    sigma: float,
    seed: int,
    init: Sequence[Sequence[float]],
    t_list: Sequence[float],
    *,
    spec: Optional[IntegratorSpec] = None,
) -> PullbackEnsemble:
    spec = spec or IntegratorSpec()
    X = np.asarray(init, dtype=float).reshape(-1, field.dim)
    ts = [float(t) for t in t_list]
    if any(t < 0 for t in ts):
        raise ValueError("pullback times must be non-negative")
    horizon = max(ts) if ts else 0.0
    path = sample_path(seed, field.m, spec.dt, (-horizon, 0.0))
    out = PullbackEnsemble(seed=int(seed), init=X, t_list=ts)
    for t in ts:
        if t == 0.0:
            out.endpoints[t] = X.copy()
            out.exploded[t] = 0
            continue
        res = evolve_ensemble(field, spec, sigma, path.shift(-t), X, 0.0, t)
        out.endpoints[t] = res.endpoints
        out.exploded[t] = res.n_exploded
    return out


def pullback_seeds(
    field: DriftField,
    sigma: float,
    seeds: Sequence[int],
    init: Sequence[Sequence[float]],
    t: float,
    *,
    spec: Optional[IntegratorSpec] = None,
    n_workers: int = 1,
) -> np.ndarray:
    """Pullback endpoints at time t for many omegas: shape (n_seeds, n_init, d)."""
    spec = spec or IntegratorSpec()
    X = np.asarray(init, dtype=float).reshape(-1, field.dim)
    seed_list = [int(s) for s in seeds]
    batches = [seed_list[i : i + SEED_BATCH] for i in range(0, len(seed_list), SEED_BATCH)]

    def run(batch: List[int]) -> np.ndarray:
        paths = [sample_path(s, field.m, spec.dt, (-t, 0.0)).shift(-t) for s in batch]
        return evolve_seeds(field, spec, sigma, paths, X, 0.0, t).end

    return np.concatenate(SeedSweepExecutor(n_workers).map_values(run, batches), axis=0)
