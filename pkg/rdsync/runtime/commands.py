"""
One handler per CLI subcommand. Each reads its block of the config from the
RunContext, runs the computation and writes its outputs through the context.
Seed sweeps record per-seed failures instead of aborting.
"""
from __future__ import annotations

import logging
from typing import Any, Callable, Dict, List

import numpy as np

from rdsync.core.enums import Command
from rdsync.core.errors import ConfigError
from rdsync.core.models import ClusterReport, LyapunovSpectrum, SyncReport
from rdsync.diagnostics.clustering import cluster_count, default_linkage_epsilon
from rdsync.diagnostics.conditions import (
    check_eventual_monotone,
    check_hessian_at_minima,
    check_monotone_on_large_sets,
    check_one_sided_lipschitz,
    gradient_direction_search,
    replay_witness,
)
from rdsync.diagnostics.control import contraction_witness, swift_control
from rdsync.diagnostics.mesh import ball_mesh
from rdsync.diagnostics.sync import ball_diameter, pullback_ensemble, two_point_sync, write_sync_csv
from rdsync.flow.cocycle import evolve
from rdsync.flow.io import write_trajectory_csv
from rdsync.lyapunov.bounds import lambda_plus_bound
from rdsync.lyapunov.spectrum import aggregate_spectra, spectrum_benettin, top_exponent_twopoint
from rdsync.measure.gibbs import ball_mass, moments, normalize
from rdsync.noise.wiener import sample_path
from rdsync.orchestration.executor import SeedSweepExecutor
from rdsync.runtime.artifacts import RunContext
from rdsync.vectorfield.field import DriftField

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


def _field(ctx: RunContext) -> DriftField:
    if ctx.field is None:
        raise ConfigError(f"command {ctx.config.command.value} needs a field block", key_path="field")
    return ctx.field


def _starts(ctx: RunContext, field: DriftField) -> List[np.ndarray]:
    x0 = ctx.config.run.x0
    if not x0:
        return [np.zeros(field.dim)]
    pts = [np.asarray(p, dtype=float) for p in x0]
    for i, p in enumerate(pts):
        if p.size != field.dim:
            raise ConfigError(f"start has dimension {p.size}, field has {field.dim}", key_path=f"run.x0.{i}")
    return pts


def _point(values: List[float], dim: int, key_path: str) -> np.ndarray:
    if not values:
        raise ConfigError("required", key_path=key_path)
    p = np.asarray(values, dtype=float)
    if p.size != dim:
        raise ConfigError(f"expected dimension {dim}, got {p.size}", key_path=key_path)
    return p


def _sweep(ctx: RunContext, fn: Callable[[int], Any]) -> Dict[int, Any]:
    """Run fn over ctx.seeds; failures are recorded in ctx.seed_failures."""
    outcomes = SeedSweepExecutor(ctx.n_workers).map(fn, ctx.seeds)
    done: Dict[int, Any] = {}
    for seed, o in zip(ctx.seeds, outcomes):
        if o.ok:
            done[seed] = o.value
            logger.info("seed %d done in %.2fs", seed, o.duration_s)
        else:
            ctx.seed_failures[str(seed)] = f"{type(o.exception).__name__}: {o.error}"
    return done


# ---------- simulate ----------


def cmd_simulate(ctx: RunContext) -> None:
    field = _field(ctx)
    cfg = ctx.config
    run = cfg.run
    starts = _starts(ctx, field)
    lo, hi = min(0.0, run.t0), max(0.0, run.t1)

    def one(seed: int):
        path = sample_path(seed, field.m, cfg.integrator.dt, (lo, hi))
        return [evolve(field, cfg.integrator, run.sigma, path, x, run.t0, run.t1, record_every=run.record_every)
                for x in starts]

    done = _sweep(ctx, one)
    summary = []
    for i, seed in enumerate(ctx.seeds):
        if seed not in done:
            continue
        for j, traj in enumerate(done[seed]):
            p = write_trajectory_csv(traj, ctx.path(f"trajectories/seed{i:04d}_x{j:02d}.csv"))
            ctx.register(p)
            summary.append({
                "seed": seed, "start": j, "end": traj.end.tolist(),
                "exploded": traj.exploded, "explosion_time": traj.explosion_time,
            })
    ctx.write_json("simulate.json", {"config_hash": ctx.config_hash, "trajectories": summary})


# ---------- lyapunov ----------


def cmd_lyapunov(ctx: RunContext) -> None:
    field = _field(ctx)
    cfg = ctx.config
    ly = cfg.lyapunov
    x0 = _starts(ctx, field)[0]
    sigma = cfg.run.sigma

    def one(seed: int):
        if ly.method == "twopoint":
            return top_exponent_twopoint(
                field, sigma, seed, x0, delta0=ly.delta0, T=ly.T, renorm_threshold=ly.renorm_threshold,
                dt=cfg.integrator.dt, burn_in=ly.burn_in, spec=cfg.integrator,
            )
        return spectrum_benettin(
            field, sigma, seed, x0, k=ly.k, T=ly.T, burn_in=ly.burn_in, qr_every=ly.qr_every,
            dt=cfg.integrator.dt, spec=cfg.integrator,
        )

    done = _sweep(ctx, one)
    if not done:
        return
    results = [done[s] for s in ctx.seeds if s in done]
    payload: Dict[str, Any] = {"config_hash": ctx.config_hash, "method": ly.method, "per_seed": results}
    if ly.method == "twopoint":
        vals = np.array([r.exponent for r in results])
        payload["exponents"] = [float(vals.mean())]
        payload["stderr"] = [float(np.sqrt(sum(r.std_error**2 for r in results)) / len(results))]
    else:
        agg = aggregate_spectra(results)
        payload["exponents"] = agg.exponents
        payload["stderr"] = agg.block_std_errors
        header = ["t"] + [f"lambda{i + 1}" for i in range(len(agg.exponents))]
        for i, seed in enumerate(ctx.seeds):
            if seed in done:
                sp: LyapunovSpectrum = done[seed]
                ctx.write_csv(f"lyapunov_running/seed{i:04d}.csv", header, sp.running)
    if field.is_gradient and field.dim <= 3 and sigma > 0:
        gibbs = normalize(field, sigma)
        payload["lambda_plus_bound"] = lambda_plus_bound(field, gibbs)
    ctx.write_json("lyapunov.json", payload)


# ---------- gibbs ----------


def cmd_gibbs(ctx: RunContext) -> None:
    field = _field(ctx)
    cfg = ctx.config
    g = cfg.gibbs
    gibbs = normalize(field, cfg.run.sigma, box=g.box, N=g.N)
    mean, second = moments(gibbs)
    payload: Dict[str, Any] = {
        "config_hash": ctx.config_hash,
        "sigma": gibbs.sigma,
        "Z": gibbs.Z,
        "log_Z": gibbs.log_Z,
        "box": list(gibbs.box),
        "grid_points_per_axis": gibbs.grid_points_per_axis,
        "tail_mass_estimate": gibbs.tail_mass_estimate,
        "refinement_error": gibbs.refinement_error,
        "mean": mean,
        "second_moment": second,
        "lambda_plus_bound": lambda_plus_bound(field, gibbs),
    }
    if field.dim <= 3:
        payload["ball_masses"] = {repr(float(r)): ball_mass(gibbs, r) for r in g.ball_radii}
    ctx.write_json("gibbs.json", payload)
    if g.density_csv and field.dim <= 2:
        pts = gibbs.points()
        rho = gibbs.weights / gibbs.z_shifted
        header = ["x1", "density"] if field.dim == 1 else ["x1", "x2", "density"]
        rows = (list(p) + [r] for p, r in zip(pts.reshape(-1, field.dim), rho.ravel()))
        ctx.write_csv("gibbs_density.csv", header, rows)


# ---------- sync / diam ----------


def _write_sync(ctx: RunContext, name: str, report: SyncReport) -> None:
    ctx.seed_failures.update(report.seed_failures)
    ctx.write_json(f"{name}.json", report)
    ctx.register(write_sync_csv(report, ctx.path(f"{name}.csv")))


def cmd_sync(ctx: RunContext) -> None:
    field = _field(ctx)
    cfg = ctx.config
    s = cfg.sync
    x = _point(s.x, field.dim, "sync.x")
    y = _point(s.y, field.dim, "sync.y")
    if not ctx.seeds:
        return
    report = two_point_sync(
        field, cfg.run.sigma, x, y, s.T, len(ctx.seeds), s.checkpoints or None, s.epsilon,
        seeds=ctx.seeds, spec=cfg.integrator, n_workers=ctx.n_workers, config_hash=ctx.config_hash,
    )
    _write_sync(ctx, "sync", report)


def cmd_diam(ctx: RunContext) -> None:
    field = _field(ctx)
    cfg = ctx.config
    b = cfg.diam
    center = _point(b.center, field.dim, "diam.center") if b.center else np.zeros(field.dim)
    if not ctx.seeds:
        return
    report = ball_diameter(
        field, cfg.run.sigma, center, b.radius, b.mesh_n, b.T, len(ctx.seeds), b.checkpoints or None, b.epsilon,
        seeds=ctx.seeds, spec=cfg.integrator, n_workers=ctx.n_workers, config_hash=ctx.config_hash,
    )
    _write_sync(ctx, "diam", report)


# ---------- pullback / cluster ----------


def _pullback_init(ctx: RunContext, field: DriftField) -> np.ndarray:
    pb = ctx.config.pullback
    if pb.init:
        pts = np.asarray(pb.init, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != field.dim:
            raise ConfigError(f"init points must have dimension {field.dim}", key_path="pullback.init")
        return pts
    n = pb.n_init or 1
    if field.periodic:
        return (TWO_PI * np.arange(n) / n)[:, None]
    return ball_mesh(np.zeros(field.dim), 2.0, n)


def _pullback_sweep(ctx: RunContext, field: DriftField):
    cfg = ctx.config
    init = _pullback_init(ctx, field)

    def one(seed: int):
        return pullback_ensemble(field, cfg.run.sigma, seed, init, cfg.pullback.t_list, spec=cfg.integrator)

    return _sweep(ctx, one)


def cmd_pullback(ctx: RunContext) -> None:
    field = _field(ctx)
    done = _pullback_sweep(ctx, field)
    per_seed = []
    rows = []
    for i, seed in enumerate(ctx.seeds):
        if seed not in done:
            continue
        ens = done[seed]
        per_seed.append({
            "seed": seed,
            "max_pairwise_distance": {repr(t): ens.max_pairwise_distance(t, field.periodic) for t in ens.t_list},
            "n_exploded": {repr(t): ens.exploded[t] for t in ens.t_list},
        })
        for t in ens.t_list:
            for j, p in enumerate(ens.endpoints[t]):
                rows.append([i, t, j] + list(p))
    ctx.write_json("pullback.json", {"config_hash": ctx.config_hash, "per_seed": per_seed})
    if rows:
        header = ["seed_index", "t", "member"] + [f"x{k + 1}" for k in range(field.dim)]
        ctx.write_csv("pullback_endpoints.csv", header, rows)


def cmd_cluster(ctx: RunContext) -> None:
    field = _field(ctx)
    cfg = ctx.config
    eps = cfg.pullback.linkage_epsilon or default_linkage_epsilon(max(cfg.run.sigma, 1e-12), cfg.integrator.dt)
    metric = "arc" if field.periodic else "euclidean"
    done = _pullback_sweep(ctx, field)
    reports: List[Dict[str, Any]] = []
    counts: Dict[str, int] = {}
    for seed in ctx.seeds:
        if seed not in done:
            continue
        ens = done[seed]
        t_last = max(ens.t_list)
        pts = ens.endpoints[t_last]
        rep: ClusterReport = cluster_count(pts, eps, metric=metric)
        reports.append({"seed": seed, "t": t_last, "report": rep})
        key = str(rep.cluster_count)
        counts[key] = counts.get(key, 0) + 1
    ctx.write_json("cluster.json", {
        "config_hash": ctx.config_hash, "linkage_epsilon": eps, "metric": metric,
        "count_histogram": counts, "per_seed": reports,
    })


# ---------- check / control ----------


def cmd_check(ctx: RunContext) -> None:
    field = _field(ctx)
    c = ctx.config.check
    seed = ctx.config.noise.seed
    reports = [check_one_sided_lipschitz(field, box=c.box, n_pairs=c.n_pairs, seed=seed)]
    if c.R is not None:
        reports.append(check_eventual_monotone(field, c.R, n_pairs=c.n_pairs, seed=seed))
    if c.r is not None:
        reports.append(check_monotone_on_large_sets(field, c.r, c.z_candidates or None, n_pairs=min(c.n_pairs, 20_000), seed=seed))
    if c.v:
        if not c.z_grid:
            raise ConfigError("gradient direction search needs a z grid", key_path="check.z_grid")
        reports.append(gradient_direction_search(field, c.v, c.z_grid))
    if c.minima:
        reports.append(check_hessian_at_minima(field, c.minima))
    payload = {
        "config_hash": ctx.config_hash,
        "reports": [{"report": r, "replayed": replay_witness(field, r)} for r in reports],
    }
    ctx.write_json("check.json", payload)


def cmd_control(ctx: RunContext) -> None:
    field = _field(ctx)
    cfg = ctx.config
    c = cfg.control
    sigma = cfg.run.sigma
    payload: Dict[str, Any] = {"config_hash": ctx.config_hash}
    if c.x:
        x = _point(c.x, field.dim, "control.x")
        z = _point(c.z, field.dim, "control.z")
        rep = swift_control(field, sigma, x, c.r, z, c.t0, c.delta, mesh_n=c.mesh_n, n_steps=c.n_steps)
        payload["swift_control"] = rep.model_dump(exclude={"times", "control"})
        rows = ([t] + list(f) for t, f in zip(rep.times, rep.control))
        ctx.write_csv("control.csv", ["t"] + [f"f{i + 1}" for i in range(field.dim)], rows)
    if c.contraction_z is not None:
        zc = _point(c.contraction_z, field.dim, "control.contraction_z")
        payload["contraction_witness"] = contraction_witness(
            field, sigma, c.contraction_R, zc, mesh_n=c.mesh_n, seed=cfg.noise.seed
        )
    if len(payload) == 1:
        raise ConfigError("set control.x/control.z or control.contraction_z", key_path="control")
    ctx.write_json("control.json", payload)


# ---------- paper suite ----------


def cmd_paper_suite(ctx: RunContext) -> None:
    from rdsync.acceptance.suite import reproduce_paper_examples, render_report

    s = ctx.config.suite
    results = reproduce_paper_examples(
        scale=s.scale, only=s.only or None, n_workers=ctx.n_workers, seed=ctx.config.noise.seed
    )
    ctx.write_json("suite.json", {"config_hash": ctx.config_hash, "scale": s.scale, "criteria": results})
    ctx.write_text("suite.md", render_report(results, scale=s.scale))
    ctx.suite_failed = not all(r.passed for r in results)


COMMANDS: Dict[Command, Callable[[RunContext], None]] = {
    Command.SIMULATE: cmd_simulate,
    Command.LYAPUNOV: cmd_lyapunov,
    Command.GIBBS: cmd_gibbs,
    Command.SYNC: cmd_sync,
    Command.DIAM: cmd_diam,
    Command.PULLBACK: cmd_pullback,
    Command.CLUSTER: cmd_cluster,
    Command.CHECK: cmd_check,
    Command.CONTROL: cmd_control,
    Command.PAPER_SUITE: cmd_paper_suite,
}


def get_command(command: Command) -> Callable[[RunContext], None]:
    try:
        return COMMANDS[command]
    except KeyError as e:
        raise ConfigError(f"unknown command {command!r}", key_path="command") from e


def uses_seeds(command: Command) -> bool:
    return command in {Command.SIMULATE, Command.LYAPUNOV, Command.SYNC, Command.DIAM, Command.PULLBACK, Command.CLUSTER}
