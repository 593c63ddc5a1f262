"""
Sampling checks of monotonicity conditions on the drift.

The pair checks maximize the quotient q(x, y) = (b(x) - b(y), x - y) / |x - y|^2
over sampled pairs: a scrambled Halton sequence over the sampling region,
then REFINE_ROUNDS rounds of shrinking perturbations around the current
maximizer. Violations carry the pair that produced them. The Hessian
check instead evaluates D^2 V at minima supplied by the caller.
"""
from __future__ import annotations

import logging
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm, qmc

from rdsync.core.enums import ConditionKind, Verdict
from rdsync.core.errors import FieldDefinitionError
from rdsync.core.models import ConditionReport
from rdsync.vectorfield.field import DriftField, eval_drift, lambda_plus

logger = logging.getLogger(__name__)

REFINE_ROUNDS = 10
CHUNK = 1 << 16
MIN_SEPARATION = 1e-9

Sampler = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]
Projector = Callable[[np.ndarray], np.ndarray]


def quotient(field: DriftField, x: np.ndarray, y: np.ndarray, min_separation: float = MIN_SEPARATION) -> np.ndarray:
    """(b(x) - b(y), x - y) / |x - y|^2; pairs closer than min_separation give -inf."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dx = x - y
    db = eval_drift(field, x) - eval_drift(field, y)
    den = np.sum(dx * dx, axis=-1)
    num = np.sum(db * dx, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > min_separation**2, num / np.where(den > 0, den, 1.0), -np.inf)


def _halton(dim: int, n: int, seed: int) -> np.ndarray:
    return qmc.Halton(d=dim, scramble=True, seed=seed).random(n)


def _maximize(
    field: DriftField,
    sampler: Sampler,
    project: Projector,
    dim: int,
    n_pairs: int,
    seed: int,
    scale: float,
    u_dim: int,
    min_separation: float = MIN_SEPARATION,
) -> Tuple[float, np.ndarray, np.ndarray, int]:
    """Global low-discrepancy pass, then local refinement. Returns (q_max, x, y, samples)."""
    best_q = -np.inf
    best_x = best_y = None
    used = 0
    u_all = _halton(u_dim, n_pairs, seed)
    for start in range(0, n_pairs, CHUNK):
        x, y = sampler(u_all[start : start + CHUNK])
        q = quotient(field, x, y, min_separation)
        i = int(np.argmax(q))
        used += q.size
        if q[i] > best_q:
            best_q, best_x, best_y = float(q[i]), x[i], y[i]
    if best_x is None:
        return best_q, np.zeros(dim), np.zeros(dim), used

    rng = np.random.default_rng(seed)
    n_local = max(16, min(n_pairs, 1000))
    for r in range(REFINE_ROUNDS):
        s = scale * 0.5 ** (r + 1)
        xs = project(best_x + s * rng.standard_normal((n_local, dim)))
        ys = project(best_y + s * rng.standard_normal((n_local, dim)))
        q = quotient(field, xs, ys, min_separation)
        i = int(np.argmax(q))
        used += q.size
        if q[i] > best_q:
            best_q, best_x, best_y = float(q[i]), xs[i], ys[i]
    return best_q, best_x, best_y, used


def _pair_witness(x: np.ndarray, y: np.ndarray, q: float, **extra: Any) -> Dict[str, Any]:
    w: Dict[str, Any] = {"x": [float(v) for v in x], "y": [float(v) for v in y], "quotient": float(q)}
    w.update(extra)
    return w


# ---------- Regions ----------


def _box_sampler(d: int, lo: float, hi: float) -> Tuple[Sampler, Projector]:
    def sampler(u: np.ndarray):
        pts = lo + (hi - lo) * u
        return pts[:, :d], pts[:, d:]

    def project(x: np.ndarray) -> np.ndarray:
        return np.clip(x, lo, hi)

    return sampler, project


def _unit_directions(u: np.ndarray) -> np.ndarray:
    g = norm.ppf(np.clip(u, 1e-12, 1.0 - 1e-12))
    n = np.linalg.norm(g, axis=-1, keepdims=True)
    return g / np.where(n > 0, n, 1.0)


def _annulus_sampler(d: int, R: float) -> Tuple[Sampler, Projector]:
    """|x|, |y| in (R, 4R]; radii biased toward the inner sphere."""

    def point(u_r: np.ndarray, u_dir: np.ndarray) -> np.ndarray:
        r = R + 3.0 * R * u_r**2
        if d == 1:
            return np.where(u_dir[:, :1] < 0.5, -1.0, 1.0) * r[:, None]
        return r[:, None] * _unit_directions(u_dir)

    def sampler(u: np.ndarray):
        k = 1 + (1 if d == 1 else d)
        return point(u[:, 0], u[:, 1:k]), point(u[:, k], u[:, k + 1 :])

    def project(x: np.ndarray) -> np.ndarray:
        n = np.linalg.norm(x, axis=-1, keepdims=True)
        n_safe = np.where(n > 0, n, 1.0)
        target = np.clip(n, R * (1.0 + 1e-12), 4.0 * R)
        return x / n_safe * target

    return sampler, project


def _annulus_u_dim(d: int) -> int:
    return 2 * (1 + (1 if d == 1 else d))


def _ball_sampler(center: np.ndarray, rho: float) -> Tuple[Sampler, Projector]:
    d = center.size

    def point(u_r: np.ndarray, u_dir: np.ndarray) -> np.ndarray:
        r = rho * u_r ** (1.0 / d)
        if d == 1:
            return center + np.where(u_dir[:, :1] < 0.5, -1.0, 1.0) * r[:, None]
        return center + r[:, None] * _unit_directions(u_dir)

    def sampler(u: np.ndarray):
        k = 1 + (1 if d == 1 else d)
        return point(u[:, 0], u[:, 1:k]), point(u[:, k], u[:, k + 1 :])

    def project(x: np.ndarray) -> np.ndarray:
        v = x - center
        n = np.linalg.norm(v, axis=-1, keepdims=True)
        scale = np.where(n > rho, rho / np.where(n > 0, n, 1.0), 1.0)
        return center + v * scale

    return sampler, project


# ---------- Checks ----------


def check_one_sided_lipschitz(
    field: DriftField,
    box: Tuple[float, float] = (-3.0, 3.0),
    n_pairs: int = 100_000,
    seed: int = 0,
) -> ConditionReport:
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    lo, hi = box
    d = field.dim
    sampler, project = _box_sampler(d, lo, hi)
    q, x, y, used = _maximize(field, sampler, project, d, n_pairs, seed, (hi - lo) / 10.0, 2 * d)
    declared = field.one_sided_constant
    notes: List[str] = []
    if declared is None:
        notes.append("no declared one-sided constant; lambda_hat is the empirical value")
        verdict = Verdict.SATISFIED_EMPIRICALLY
    elif declared >= q - 1e-9 * max(1.0, abs(declared)):
        verdict = Verdict.SATISFIED_EMPIRICALLY
    else:
        verdict = Verdict.VIOLATED_WITH_WITNESS
    witness = _pair_witness(x, y, q, lambda_hat=q, declared=declared)
    logger.info("one-sided Lipschitz %s: lambda_hat=%.8g declared=%s -> %s", field.name, q, declared, verdict.value)
    return ConditionReport(
        kind=ConditionKind.ONE_SIDED_LIPSCHITZ, verdict=verdict, witness=witness, samples_used=used, notes=notes
    )


def check_eventual_monotone(field: DriftField, R: float, n_pairs: int = 100_000, seed: int = 0) -> ConditionReport:
    if not R > 0:
        raise ValueError("R must be positive")
    d = field.dim
    sampler, project = _annulus_sampler(d, R)
    q, x, y, used = _maximize(field, sampler, project, d, n_pairs, seed, R, _annulus_u_dim(d))
    lam1 = -q
    verdict = Verdict.SATISFIED_EMPIRICALLY if lam1 > 0 else Verdict.VIOLATED_WITH_WITNESS
    witness = _pair_witness(x, y, q, lambda1_hat=lam1, R=float(R))
    logger.info("eventual monotone %s R=%g: lambda1_hat=%.6g -> %s", field.name, R, lam1, verdict.value)
    return ConditionReport(kind=ConditionKind.EVENTUAL_MONOTONE, verdict=verdict, witness=witness, samples_used=used)


def default_z_candidates(d: int, r: float, n: int = 13) -> List[List[float]]:
    """z = j*r*e_1 for j = 0..n-1."""
    return [[j * r] + [0.0] * (d - 1) for j in range(n)]


def check_monotone_on_large_sets(
    field: DriftField,
    r: float,
    z_candidates: Optional[Sequence[Sequence[float]]] = None,
    n_pairs: int = 20_000,
    seed: int = 0,
) -> ConditionReport:
    """First candidate z with every sampled pair in B(z, 3r) giving a negative quotient."""
    if not r > 0:
        raise ValueError("r must be positive")
    d = field.dim
    cands = [np.asarray(z, dtype=float) for z in (z_candidates or default_z_candidates(d, r))]
    used = 0
    tried: List[Dict[str, Any]] = []
    for z in cands:
        if z.size != d:
            raise ValueError(f"candidate {z.tolist()} has dimension {z.size}, field has {d}")
        sampler, project = _ball_sampler(z, 3.0 * r)
        u_dim = 2 * (1 + (1 if d == 1 else d))
        q, x, y, n = _maximize(field, sampler, project, d, n_pairs, seed, r, u_dim)
        used += n
        tried.append({"z": z.tolist(), "max_quotient": q})
        if q < 0.0:
            logger.info("monotone on B(%s, %g): max quotient %.6g", z.tolist(), 3 * r, q)
            return ConditionReport(
                kind=ConditionKind.MONOTONE_LARGE_SETS,
                verdict=Verdict.SATISFIED_EMPIRICALLY,
                witness={"z": z.tolist(), "r": float(r), "max_quotient": q, "contraction_c": -q, "x": x.tolist(), "y": y.tolist()},
                samples_used=used,
            )
    logger.warning("no candidate center is monotone on B(z, %g) for %s", 3 * r, field.name)
    return ConditionReport(
        kind=ConditionKind.MONOTONE_LARGE_SETS,
        verdict=Verdict.INCONCLUSIVE,
        witness={"tried": tried, "r": float(r)},
        samples_used=used,
        notes=["no candidate center gave a strictly negative quotient"],
    )


def contraction_rate(field: DriftField, z: Sequence[float], R: float, n_pairs: int = 20_000, seed: int = 0) -> float:
    """c = -max q(x, y) over x, y in B(z, 2R) with |x - y| >= R/9."""
    if not R > 0:
        raise ValueError("R must be positive")
    center = np.asarray(z, dtype=float).ravel()
    d = field.dim
    if center.size != d:
        raise ValueError(f"z has dimension {center.size}, field has {d}")
    sampler, project = _ball_sampler(center, 2.0 * R)
    u_dim = 2 * (1 + (1 if d == 1 else d))
    q, _, _, _ = _maximize(field, sampler, project, d, n_pairs, seed, R, u_dim, min_separation=R / 9.0)
    return -q


def gradient_direction_search(field: DriftField, v, z_grid: Sequence[Sequence[float]]) -> ConditionReport:
    """
    For each direction v, the first z on the grid with (b(z) - b(z - v), v) < 0.
    `v` may be a single vector or a list of vectors.
    """
    V = np.atleast_2d(np.asarray(v, dtype=float))
    Zg = np.asarray(z_grid, dtype=float).reshape(-1, field.dim)
    if V.shape[-1] != field.dim:
        raise ValueError(f"v has dimension {V.shape[-1]}, field has {field.dim}")
    if np.any(np.linalg.norm(V, axis=-1) == 0.0):
        raise ValueError("v must be non-zero")
    found: List[Dict[str, Any]] = []
    missing: List[List[float]] = []
    for vec in V:
        vals = np.sum((eval_drift(field, Zg) - eval_drift(field, Zg - vec)) * vec, axis=-1)
        hits = np.flatnonzero(vals < 0.0)
        if hits.size:
            i = int(hits[0])
            found.append({"v": vec.tolist(), "z": Zg[i].tolist(), "value": float(vals[i])})
        else:
            missing.append(vec.tolist())
    verdict = Verdict.INCONCLUSIVE if missing else Verdict.SATISFIED_EMPIRICALLY
    witness: Dict[str, Any] = {"pairs": found}
    if missing:
        witness["unresolved_v"] = missing
    return ConditionReport(
        kind=ConditionKind.GRADIENT_DIRECTION, verdict=verdict, witness=witness, samples_used=len(V) * len(Zg)
    )


def _min_hessian_eigenvalue(field: DriftField, Z: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of D^2 V per point; D^2 V = -Db for gradient fields."""
    if field.hessian is not None:
        return np.linalg.eigvalsh(np.asarray(field.hessian(Z), dtype=float))[..., 0]
    return -np.atleast_1d(lambda_plus(field, Z))


def check_hessian_at_minima(
    field: DriftField,
    minima: Sequence[Sequence[float]],
    grad_tol: float = 1e-6,
    value_tol: float = 1e-8,
) -> ConditionReport:
    """
    inf of min_{|r|=1} (D^2 V(z) r, r) over the given global minima z of V.

    The minima are supplied by the caller. Each must be a critical point
    (|b(z)| <= grad_tol) and all must share the lowest potential value to
    within value_tol; the first point failing either test, or with a smallest
    eigenvalue <= 0, is the witness.
    """
    if not field.is_gradient:
        raise FieldDefinitionError(f"{field.name} has no potential; Hessian condition needs a gradient field")
    Z = np.atleast_2d(np.asarray(minima, dtype=float))
    if Z.size == 0:
        raise ValueError("at least one minimum is required")
    if Z.shape[-1] != field.dim:
        raise ValueError(f"minima have dimension {Z.shape[-1]}, field has {field.dim}")
    grad = np.linalg.norm(eval_drift(field, Z), axis=-1)
    V = np.asarray(field.potential(Z), dtype=float).reshape(-1)
    eig = _min_hessian_eigenvalue(field, Z).reshape(-1)
    floor = float(np.min(V))
    v_tol = value_tol * max(1.0, abs(floor))
    points = [
        {"z": z.tolist(), "min_eigenvalue": float(e), "gradient_norm": float(g), "potential": float(v)}
        for z, e, g, v in zip(Z, eig, grad, V)
    ]

    reason = None
    idx = int(np.argmin(eig))
    for i, p in enumerate(points):
        if p["gradient_norm"] > grad_tol:
            reason, idx = "not_critical", i
        elif p["potential"] > floor + v_tol:
            reason, idx = "not_global", i
        elif p["min_eigenvalue"] <= 0.0:
            reason, idx = "hessian_not_positive", i
        if reason is not None:
            break
    witness: Dict[str, Any] = {
        "z": points[idx]["z"],
        "min_eigenvalue": points[idx]["min_eigenvalue"],
        "potential_floor": floor,
        "grad_tol": float(grad_tol),
        "value_tol": float(v_tol),
        "points": points,
    }
    if reason is None:
        verdict = Verdict.SATISFIED_EMPIRICALLY
    else:
        verdict = Verdict.VIOLATED_WITH_WITNESS
        witness["reason"] = reason
    logger.info("Hessian at %d minima of %s: min eigenvalue %.6g -> %s", len(points), field.name, float(np.min(eig)), verdict.value)
    return ConditionReport(
        kind=ConditionKind.HESSIAN_AT_MINIMA,
        verdict=verdict,
        witness=witness,
        samples_used=len(points),
        notes=["minima are user-supplied; no global search is done"],
    )


def replay_witness(field: DriftField, report: ConditionReport, tol: float = 1e-9) -> bool:
    """Re-evaluate a report's witness through eval_drift; True when it still supports the verdict."""
    w = report.witness
    if report.kind == ConditionKind.GRADIENT_DIRECTION:
        for p in w.get("pairs", []):
            vec, z = np.asarray(p["v"]), np.asarray(p["z"])
            val = float(np.dot(eval_drift(field, z) - eval_drift(field, z - vec), vec))
            if not val < 0.0:
                return False
        return True
    if report.kind == ConditionKind.HESSIAN_AT_MINIMA:
        return _replay_hessian(field, report, tol)
    if "x" not in w or "y" not in w:
        return report.verdict == Verdict.INCONCLUSIVE
    q = float(quotient(field, np.asarray(w["x"]), np.asarray(w["y"])))
    if abs(q - float(w.get("quotient", w.get("max_quotient")))) > tol * max(1.0, abs(q)):
        return False
    if report.verdict != Verdict.VIOLATED_WITH_WITNESS:
        return True
    if report.kind == ConditionKind.ONE_SIDED_LIPSCHITZ:
        return w.get("declared") is not None and q > float(w["declared"])
    if report.kind == ConditionKind.EVENTUAL_MONOTONE:
        return q >= 0.0
    return False


def _replay_hessian(field: DriftField, report: ConditionReport, tol: float) -> bool:
    w = report.witness
    z = np.asarray(w["z"], dtype=float).reshape(1, -1)
    lam = float(_min_hessian_eigenvalue(field, z)[0])
    if abs(lam - float(w["min_eigenvalue"])) > tol * max(1.0, abs(lam)):
        return False
    reason = w.get("reason")
    if reason is None:
        return lam > 0.0
    if reason == "not_critical":
        return float(np.linalg.norm(eval_drift(field, z))) > float(w["grad_tol"])
    if reason == "not_global":
        return float(field.potential(z)[0]) > float(w["potential_floor"]) + float(w["value_tol"])
    return lam <= 0.0
