"""
Handlers for the acceptance-suite DAG nodes.

Each handler reads its node params (quick overrides applied) and returns
{"criteria": {node_id: metrics}}; the executor merges these in node-id order
and the acceptance evaluator applies the YAML checks to the metrics.
"""
from __future__ import annotations

import logging
import math
import tempfile
from pathlib import Path
from typing import Any, Callable, Dict, List

import numpy as np
from scipy.special import erf

from rdsync.core.models import BuiltinSpec, IntegratorSpec
from rdsync.core.enums import FieldKind
from rdsync.diagnostics.clustering import cluster_count, default_linkage_epsilon, wrapped_difference
from rdsync.diagnostics.control import contraction_witness, swift_control
from rdsync.diagnostics.sync import pullback_seeds, two_point_sync
from rdsync.flow.cocycle import evolve_ensemble
from rdsync.lyapunov.bounds import gradient_1d_exponent, lambda_plus_bound
from rdsync.lyapunov.spectrum import aggregate_spectra, spectrum_benettin
from rdsync.measure.gibbs import ball_mass, moments, normalize
from rdsync.noise.seeds import derive_seed, derive_seeds
from rdsync.noise.wiener import sample_path
from rdsync.orchestration.dag_spec import NodeSpec
from rdsync.orchestration.executor import SeedSweepExecutor
from rdsync.vectorfield.builtins import build, build_from_dict, double_well, linear, ou, v_e

logger = logging.getLogger(__name__)

Handler = Callable[[Dict[str, Any], NodeSpec], Dict[str, Any]]


def _params(ctx: Dict[str, Any], spec: NodeSpec) -> Dict[str, Any]:
    return spec.params_for(ctx.get("scale", "full"))


def _seed(ctx: Dict[str, Any], spec: NodeSpec) -> int:
    """Per-node base seed, so nodes do not share streams."""
    return derive_seed(int(ctx.get("seed", 0)), int(spec.id[1:]) if spec.id[1:].isdigit() else 0)


def _workers(ctx: Dict[str, Any]) -> int:
    return int(ctx.get("n_workers", 1))


def _result(spec: NodeSpec, metrics: Dict[str, Any]) -> Dict[str, Any]:
    logger.info("%s metrics: %s", spec.id, metrics)
    return {"criteria": {spec.id: metrics}}


def _replicated_spectrum(field, sigma, seeds: List[int], x0, T, dt, n_workers):
    run = lambda s: spectrum_benettin(field, sigma, s, x0, T=T, dt=dt)  # noqa: E731
    return aggregate_spectra(SeedSweepExecutor(n_workers).map_values(run, seeds))


# ---------- Noise and cocycle ----------


def suite_cocycle_identity(ctx: Dict[str, Any], spec: NodeSpec) -> Dict[str, Any]:
    p = _params(ctx, spec)
    dt = float(p["dt"])
    max_steps = int(round(float(p["max_time"]) / dt))
    sigma = float(p.get("sigma", 1.0))
    rng = np.random.default_rng(_seed(ctx, spec))
    fields = [ou(2), double_well(2), v_e()]
    integrator = IntegratorSpec(dt=dt)
    failures = 0
    for case in range(int(p["cases"])):
        field = fields[case % len(fields)]
        s_steps, t_steps = (int(v) for v in rng.integers(1, max_steps + 1, size=2))
        s, total = s_steps * dt, (s_steps + t_steps) * dt
        path = sample_path(int(rng.integers(0, 2**62)), field.m, dt, (0.0, total))
        x0 = rng.uniform(-2.0, 2.0, size=field.dim)
        direct = evolve_ensemble(field, integrator, sigma, path, [x0], 0.0, total).endpoints[0]
        mid = evolve_ensemble(field, integrator, sigma, path, [x0], 0.0, s).endpoints[0]
        split = evolve_ensemble(field, integrator, sigma, path.shift(s), [mid], 0.0, t_steps * dt).endpoints[0]
        if not np.array_equal(direct, split):
            failures += 1
            logger.warning("cocycle mismatch for %s at s=%g t=%g", field.name, s, t_steps * dt)
    return _result(spec, {"failures": failures, "cases": int(p["cases"])})


def suite_shift_algebra(ctx: Dict[str, Any], spec: NodeSpec) -> Dict[str, Any]:
    p = _params(ctx, spec)
    delta = float(p["delta"])
    n = 64
    L = 4 * n * delta
    rng = np.random.default_rng(_seed(ctx, spec))
    failures = 0
    for _ in range(int(p["cases"])):
        seed = int(rng.integers(0, 2**62))
        dim = int(rng.integers(1, 4))
        a, b, c = (int(v) for v in rng.integers(-n, n + 1, size=3))
        s, t, u = a * delta, b * delta, c * delta
        path = sample_path(seed, dim, delta, (-L, L))
        group = np.array_equal(path.shift(s).shift(t).increments(-n, n), path.shift((a + b) * delta).increments(-n, n))
        values = np.array_equal(path.shift(t).value(u), path.value((b + c) * delta) - path.value(t))
        again = np.array_equal(sample_path(seed, dim, delta, (-L, L)).increments(-n, n), path.increments(-n, n))
        if not (group and values and again):
            failures += 1
            logger.warning("shift algebra failed: seed=%d s=%g t=%g u=%g", seed, s, t, u)
    return _result(spec, {"failures": failures, "cases": int(p["cases"])})


# ---------- Gibbs measure ----------


def _gaussian_ball(d: int, R: float, sigma: float) -> float:
    if d == 1:
        return float(erf(R / sigma))
    return 1.0 - math.exp(-(R * R) / (sigma * sigma))


def suite_gibbs_gaussian(ctx: Dict[str, Any], spec: NodeSpec) -> Dict[str, Any]:
    p = _params(ctx, spec)
    z_err = m_err = b_err = 0.0
    for d in p["dims"]:
        field = ou(int(d))
        for sigma in p["sigmas"]:
            sigma = float(sigma)
            g = normalize(field, sigma)
            z_exact = (math.pi * sigma * sigma) ** (d / 2.0)
            z_err = max(z_err, abs(g.Z - z_exact) / z_exact)
            mean, second = moments(g)
            m_err = max(m_err, float(np.max(np.abs(mean))),
                        float(np.max(np.abs(second - 0.5 * sigma * sigma * np.eye(int(d))))))
            for R in p["radii"]:
                b_err = max(b_err, abs(ball_mass(g, float(R)) - _gaussian_ball(int(d), float(R), sigma)))
    return _result(spec, {"max_z_rel_error": z_err, "max_moment_error": m_err, "max_ball_error": b_err})


def suite_flattening(ctx: Dict[str, Any], spec: NodeSpec) -> Dict[str, Any]:
    p = _params(ctx, spec)
    R = float(p["radius"])
    masses: Dict[str, List[float]] = {}
    min_decrease = math.inf
    for fdef in p["fields"]:
        field = build_from_dict(fdef)
        row = [ball_mass(normalize(field, float(s)), R) for s in p["sigmas"]]
        masses[field.name] = row
        min_decrease = min(min_decrease, float(np.min(-np.diff(row))))
    return _result(spec, {"min_decrease": min_decrease, "ball_masses": masses})


# ---------- Lyapunov ----------


def suite_ou_exactness(ctx: Dict[str, Any], spec: NodeSpec) -> Dict[str, Any]:
    p = _params(ctx, spec)
    base = _seed(ctx, spec)
    worst = 0.0
    exps: Dict[str, List[float]] = {}
    for d in p["dims"]:
        d = int(d)
        sp = spectrum_benettin(ou(d), float(p["sigma"]), derive_seed(base, d), np.zeros(d), T=float(p["T"]), dt=float(p["dt"]))
        exps[str(d)] = sp.exponents
        worst = max(worst, float(np.max(np.abs(np.asarray(sp.exponents) + 1.0))))
    return _result(spec, {"max_abs_error": worst, "exponents": exps})


def suite_one_d_identity(ctx: Dict[str, Any], spec: NodeSpec) -> Dict[str, Any]:
    p = _params(ctx, spec)
    base = _seed(ctx, spec)
    field = double_well(1)
    max_z = 0.0
    max_refine = 0.0
    rows = []
    for i, sigma in enumerate(p["sigmas"]):
        sigma = float(sigma)
        quad = gradient_1d_exponent(field, normalize(field, sigma))
        seeds = derive_seeds(derive_seed(base, i), int(p["replicas"]))
        agg = _replicated_spectrum(field, sigma, seeds, [1.0], float(p["T"]), float(p["dt"]), _workers(ctx))
        se = math.hypot(agg.top_std_error, quad.error)
        z = abs(agg.top - quad.value) / se if se > 0 else math.inf
        max_z = max(max_z, z)
        max_refine = max(max_refine, quad.error)
        rows.append({"sigma": sigma, "benettin": agg.top, "se": agg.top_std_error, "quadrature": quad.value})
    return _result(spec, {"max_z_score": max_z, "max_quadrature_refinement": max_refine, "rows": rows})


def suite_lambda_plus_inequality(ctx: Dict[str, Any], spec: NodeSpec) -> Dict[str, Any]:
    p = _params(ctx, spec)
    base = _seed(ctx, spec)
    max_excess = -math.inf
    rows = []
    for j, fdef in enumerate(p["fields"]):
        field = build_from_dict(fdef)
        for i, sigma in enumerate(p["sigmas"]):
            sigma = float(sigma)
            bound = lambda_plus_bound(field, normalize(field, sigma))
            seeds = derive_seeds(derive_seed(base, 100 * j + i), int(p["replicas"]))
            agg = _replicated_spectrum(field, sigma, seeds, np.zeros(field.dim), float(p["T"]), float(p["dt"]), _workers(ctx))
            excess = agg.top - (bound.value + 3.0 * math.hypot(agg.top_std_error, bound.error))
            max_excess = max(max_excess, excess)
            rows.append({"field": field.name, "sigma": sigma, "lambda_top": agg.top, "bound": bound.value})
    return _result(spec, {"max_excess": max_excess, "rows": rows})


def suite_radial_sign(ctx: Dict[str, Any], spec: NodeSpec) -> Dict[str, Any]:
    p = _params(ctx, spec)
    worst = -math.inf
    for d in p["dims"]:
        field = double_well(int(d))
        for sigma in p["sigmas"]:
            worst = max(worst, lambda_plus_bound(field, normalize(field, float(sigma))).value)
    return _result(spec, {"max_bound": worst})


# ---------- Synchronization ----------


def suite_double_well_sync(ctx: Dict[str, Any], spec: NodeSpec) -> Dict[str, Any]:
    p = _params(ctx, spec)
    field = double_well(2)
    integrator = IntegratorSpec(dt=float(p["dt"]))
    T = float(p["T"])
    report = two_point_sync(
        field, float(p["sigma"]), p["x"], p["y"], T, int(p["n_seeds"]), [T], float(p["epsilon"]),
        seed=_seed(ctx, spec), spec=integrator, n_workers=_workers(ctx),
    )
    still = evolve_ensemble(
        field, integrator, 0.0, sample_path(0, field.m, integrator.dt, (0.0, T)), [p["x"], p["y"]], 0.0, T
    ).endpoints
    return _result(spec, {
        "exceed_prob": report.exceed_prob[-1].p,
        "exceed_ci_high": report.exceed_prob[-1].ci_high,
        "median_distance": report.distance_quantiles[-1].q50,
        "n_exploded": report.n_exploded,
        "sigma0_distance": float(np.linalg.norm(still[0] - still[1])),
    })


def suite_circle_pullback(ctx: Dict[str, Any], spec: NodeSpec) -> Dict[str, Any]:
    p = _params(ctx, spec)
    field = build(BuiltinSpec(kind=FieldKind.CIRCLE_STRATONOVICH))
    sigma = float(p["sigma"])
    integrator = IntegratorSpec(dt=float(p["dt"]))
    n = int(p["n_init"])
    init = (2.0 * math.pi * np.arange(n) / n)[:, None]
    seeds = derive_seeds(_seed(ctx, spec), int(p["n_seeds"]))
    ends = pullback_seeds(field, sigma, seeds, init, float(p["t"]), spec=integrator, n_workers=_workers(ctx))
    eps = float(p.get("linkage_epsilon") or default_linkage_epsilon(sigma, integrator.dt))
    two = 0
    worst = 0.0
    histogram: Dict[str, int] = {}
    for pts in ends:
        rep = cluster_count(pts, eps, metric="arc")
        histogram[str(rep.cluster_count)] = histogram.get(str(rep.cluster_count), 0) + 1
        if rep.cluster_count == 2:
            two += 1
            gap = abs(float(wrapped_difference(np.array(rep.cluster_centers[0]), np.array(rep.cluster_centers[1]))[0]))
            worst = max(worst, abs(gap - math.pi))
    return _result(spec, {
        "fraction_two_clusters": two / len(seeds),
        "max_antipode_error": worst if two else math.inf,
        "cluster_histogram": histogram,
    })


# ---------- Control witnesses ----------


def suite_swift_control(ctx: Dict[str, Any], spec: NodeSpec) -> Dict[str, Any]:
    p = _params(ctx, spec)
    sigma = float(p["sigma"])
    r, delta, n_steps = float(p["r"]), float(p["delta"]), int(p["n_steps"])
    rep = swift_control(double_well(2), sigma, p["x"], r, p["z"], None, delta, mesh_n=int(p["mesh_n"]), n_steps=n_steps)
    zero = swift_control(linear([[0.0, 0.0], [0.0, 0.0]]), sigma, [0.0, 0.0], r, p["z"], None, delta, n_steps=n_steps)
    coarse = swift_control(ou(2), sigma, [0.0, 0.0], r, [1.0, 0.0], None, delta, n_steps=n_steps // 2)
    fine = swift_control(ou(2), sigma, [0.0, 0.0], r, [1.0, 0.0], None, delta, n_steps=n_steps)
    return _result(spec, {
        "all_landed": int(rep.all_landed),
        "max_landing_error": max(rep.landing_errors),
        "t0": rep.t0,
        "zero_drift_residual": zero.residual,
        "ou_order_ratio": coarse.residual / fine.residual if fine.residual > 0 else math.inf,
    })


def suite_contraction_witness(ctx: Dict[str, Any], spec: NodeSpec) -> Dict[str, Any]:
    p = _params(ctx, spec)
    rep = contraction_witness(double_well(2), float(p["sigma"]), float(p["R"]), p["z"],
                              mesh_n=int(p["mesh_n"]), seed=_seed(ctx, spec))
    return _result(spec, {"ratio": rep.ratio, "T0": rep.T0, "c_estimate": rep.c_estimate})


# ---------- Determinism ----------


def suite_determinism(ctx: Dict[str, Any], spec: NodeSpec) -> Dict[str, Any]:
    from rdsync.config.loader import build_config, load_config
    from rdsync.runtime.run_experiment import run

    p = _params(ctx, spec)
    T = float(p["T"])
    doc = {
        "command": "sync",
        "field": {"kind": "double_well", "dim": 2},
        "noise": {"seed": _seed(ctx, spec), "n_seeds": int(p["n_seeds"])},
        "run": {"sigma": 1.0},
        "sync": {"x": [1.0, 0.0], "y": [-1.0, 0.0], "T": T, "checkpoints": [T / 2, T]},
    }
    digests = []
    with tempfile.TemporaryDirectory(prefix="rdsync-determinism-") as tmp:
        first = None
        for w in p["workers"]:
            m = run(build_config(doc), out_dir=Path(tmp) / f"w{w}", n_workers=int(w))
            digests.append(m.outputs)
            first = first or Path(tmp) / f"w{w}" / "manifest.json"
        rerun = run(load_config(first), out_dir=Path(tmp) / "rerun", n_workers=1)
        digests.append(rerun.outputs)
    mismatches = sum(1 for d in digests[1:] if d != digests[0])
    return _result(spec, {"digest_mismatches": mismatches, "runs": len(digests), "n_outputs": len(digests[0])})


def build_handlers() -> Dict[str, Handler]:
    return {
        "suite.cocycle_identity": suite_cocycle_identity,
        "suite.shift_algebra": suite_shift_algebra,
        "suite.gibbs_gaussian": suite_gibbs_gaussian,
        "suite.flattening": suite_flattening,
        "suite.ou_exactness": suite_ou_exactness,
        "suite.one_d_identity": suite_one_d_identity,
        "suite.lambda_plus_inequality": suite_lambda_plus_inequality,
        "suite.radial_sign": suite_radial_sign,
        "suite.double_well_sync": suite_double_well_sync,
        "suite.circle_pullback": suite_circle_pullback,
        "suite.swift_control": suite_swift_control,
        "suite.contraction_witness": suite_contraction_witness,
        "suite.determinism": suite_determinism,
    }
