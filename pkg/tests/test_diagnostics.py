import math

import numpy as np
import pytest

from rdsync.core.enums import Scheme, Verdict
from rdsync.core.errors import FieldDefinitionError, NewtonDivergenceError, ProofHypothesisError
from rdsync.core.models import IntegratorSpec
from rdsync.diagnostics.clustering import cluster_count, default_linkage_epsilon, wrapped_difference
from rdsync.diagnostics.conditions import (
    check_eventual_monotone,
    check_hessian_at_minima,
    check_monotone_on_large_sets,
    check_one_sided_lipschitz,
    gradient_direction_search,
    quotient,
    replay_witness,
)
from rdsync.diagnostics.control import contraction_witness, swift_control
from rdsync.diagnostics import sync as sync_mod
from rdsync.diagnostics.mesh import ball_mesh
from rdsync.diagnostics.sync import (
    ball_diameter,
    build_report,
    pullback_ensemble,
    pullback_seeds,
    two_point_sync,
    wilson_row,
    write_sync_csv,
)
from rdsync.noise import derive_seeds
from rdsync.vectorfield.builtins import build_from_dict, double_well, linear, ou
from rdsync.vectorfield.expr import expression_field

EM = IntegratorSpec(scheme=Scheme.EULER_MARUYAMA, dt=1e-3)


# ---------- mesh / clustering ----------


def test_ball_mesh_layout():
    assert np.array_equal(ball_mesh([1.0, 2.0], 3.0, 1), [[1.0, 2.0]])
    pts = ball_mesh([0.0, 0.0], 2.0, 9)
    r = np.linalg.norm(pts, axis=-1)
    assert pts.shape == (9, 2)
    assert np.allclose(r[:5], 2.0)
    assert np.all(r[5:] < 2.0)
    assert sorted(ball_mesh([0.0], 1.0, 2)[:, 0].tolist()) == [-1.0, 1.0]
    with pytest.raises(ValueError):
        ball_mesh([0.0], 1.0, 0)


def test_cluster_count_euclidean():
    rep = cluster_count([[5.02], [0.0], [5.0], [0.01]], 0.1)
    assert rep.cluster_count == 2
    assert rep.cluster_sizes == [2, 2]
    assert rep.cluster_centers[0][0] == pytest.approx(0.005)
    assert rep.cluster_centers[1][0] == pytest.approx(5.01)
    assert rep.max_intra_cluster_diameter == pytest.approx(0.02)


def test_cluster_count_wraps_on_circle():
    rep = cluster_count([0.1, 2 * math.pi - 0.1, math.pi], 0.5, metric="arc")
    assert rep.cluster_count == 2
    assert cluster_count([0.1, 2 * math.pi - 0.1], 0.5).cluster_count == 2
    assert np.allclose(wrapped_difference(np.array([0.1]), np.array([2 * math.pi - 0.1])), 0.2)


def test_cluster_count_edge_cases():
    assert cluster_count([[1.0, 1.0]], 0.1).cluster_count == 1
    with pytest.raises(ValueError):
        cluster_count([], 0.1)
    with pytest.raises(ValueError):
        cluster_count([[0.0]], 0.0)
    assert default_linkage_epsilon(1.0, 1e-2) == pytest.approx(2.0)


# ---------- sync statistics ----------


def test_wilson_row_bounds():
    row = wilson_row(0, 50)
    assert row.p == 0.0 and row.ci_low == 0.0 and 0.0 < row.ci_high < 0.1
    assert wilson_row(0, 0).ci_high == 1.0
    full = wilson_row(50, 50)
    assert full.p == 1.0 and full.ci_high == 1.0


def test_build_report_excludes_exploded():
    dist = np.array([[0.1, 0.2, 9.0], [0.01, 0.02, 9.0]])
    rep = build_report("two_point_distance", [1.0, 2.0], dist, np.array([False, False, True]), 0.05)
    assert rep.ensemble_size == 2 and rep.n_exploded == 1
    assert rep.exceed_prob[0].p == 1.0 and rep.exceed_prob[1].p == 0.0
    assert rep.final_fraction_below == 1.0


def test_ou_two_point_contracts_deterministically():
    rep = two_point_sync(ou(2), 1.0, [1.0, 0.0], [-1.0, 0.0], T=5.0, n_seeds=30, checkpoints=[0.5, 5.0], spec=EM)
    gap = 2.0 * (1.0 - 1e-3) ** 5000
    q = rep.distance_quantiles[-1]
    assert q.q05 == pytest.approx(gap, rel=1e-8) and q.q95 == pytest.approx(gap, rel=1e-8)
    assert rep.exceed_prob[0].p == 1.0
    assert rep.exceed_prob[1].p == 0.0
    assert rep.checkpoints == [0.5, 5.0]


def test_two_point_worker_count_does_not_change_result():
    kw = dict(T=1.0, n_seeds=60, checkpoints=[1.0], seed=3)
    a = two_point_sync(double_well(1), 1.0, [1.0], [-1.0], **kw)
    b = two_point_sync(double_well(1), 1.0, [1.0], [-1.0], n_workers=3, **kw)
    assert a.model_dump() == b.model_dump()


def test_two_point_rejects_bad_inputs():
    with pytest.raises(ValueError):
        two_point_sync(ou(1), 1.0, [0.0], [1.0], T=1.0, n_seeds=0)
    with pytest.raises(ValueError):
        two_point_sync(ou(1), 1.0, [0.0], [1.0], T=1.0, n_seeds=2, checkpoints=[2.0])


def _failing_seed(monkeypatch, bad):
    real = sync_mod.sample_path

    def sample(seed, *args, **kwargs):
        if seed in bad:
            raise NewtonDivergenceError("implicit step did not converge", step=3)
        return real(seed, *args, **kwargs)

    monkeypatch.setattr(sync_mod, "sample_path", sample)


def test_failing_seed_is_dropped_from_sweep(monkeypatch):
    _failing_seed(monkeypatch, {7})
    rep = two_point_sync(ou(1), 1.0, [0.0], [1.0], T=0.5, n_seeds=0, seeds=list(range(1, 61)), spec=EM, n_workers=2)
    # the rest of the failing batch is kept
    assert rep.ensemble_size == 59
    assert list(rep.seed_failures) == ["7"]
    assert rep.seed_failures["7"].startswith("NewtonDivergenceError")
    assert rep.distance_quantiles[0].max == pytest.approx((1.0 - 1e-3) ** 500, rel=1e-8)


def test_all_seeds_failing_gives_empty_ensemble(monkeypatch):
    _failing_seed(monkeypatch, {1, 2})
    rep = ball_diameter(ou(1), 1.0, [0.0], 1.0, 3, T=0.5, n_seeds=0, seeds=[1, 2], spec=EM)
    assert rep.ensemble_size == 0
    assert set(rep.seed_failures) == {"1", "2"}
    assert math.isnan(rep.distance_quantiles[0].q50)
    assert rep.final_fraction_below is None


def test_ball_diameter_and_csv(tmp_path):
    rep = ball_diameter(ou(1), 1.0, [0.0], 1.0, 5, T=2.0, n_seeds=4, spec=EM)
    assert rep.statistic == "ball_diameter"
    assert rep.distance_quantiles[0].max == pytest.approx(2.0 * (1.0 - 1e-3) ** 2000, rel=1e-8)
    out = write_sync_csv(rep, tmp_path / "diam.csv")
    lines = out.read_text().splitlines()
    assert lines[0] == "t,q05,q25,q50,q75,q95,exceed_prob"
    assert len(lines) == 2


def test_pullback_ensemble_ou_collapses():
    ens = pullback_ensemble(ou(1), 1.0, 7, [[-2.0], [0.0], [3.0]], [0.0, 10.0], spec=EM)
    assert np.array_equal(ens.endpoints[0.0], [[-2.0], [0.0], [3.0]])
    assert ens.max_pairwise_distance(0.0) == 5.0
    assert ens.max_pairwise_distance(10.0) < 5.0 * math.exp(-9.9)
    with pytest.raises(ValueError):
        pullback_ensemble(ou(1), 1.0, 7, [[0.0]], [-1.0])


def test_pullback_seeds_matches_single_ensemble():
    seeds = derive_seeds(0, 3)
    ends = pullback_seeds(double_well(1), 1.0, seeds, [[-1.0], [1.0]], 2.0, spec=EM)
    assert ends.shape == (3, 2, 1)
    single = pullback_ensemble(double_well(1), 1.0, seeds[1], [[-1.0], [1.0]], [2.0], spec=EM)
    assert np.array_equal(ends[1], single.endpoints[2.0])


# ---------- monotonicity checks ----------


def test_ou_quotient_is_constant():
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(50, 3)), rng.normal(size=(50, 3))
    assert np.allclose(quotient(ou(3), x, y), -1.0)
    assert quotient(ou(1), np.array([1.0]), np.array([1.0])) == -np.inf


def test_one_sided_lipschitz_satisfied_and_violated():
    rep = check_one_sided_lipschitz(ou(2), n_pairs=2000)
    assert rep.verdict == Verdict.SATISFIED_EMPIRICALLY
    assert rep.witness["lambda_hat"] == pytest.approx(-1.0)
    dw = check_one_sided_lipschitz(double_well(1), n_pairs=2000)
    assert dw.verdict == Verdict.SATISFIED_EMPIRICALLY
    assert dw.witness["lambda_hat"] <= 1.0 + 1e-9
    wrong = build_from_dict({"kind": "expr", "expr": ["-x1"], "one_sided_constant": -2.0})
    bad = check_one_sided_lipschitz(wrong, n_pairs=500)
    assert bad.verdict == Verdict.VIOLATED_WITH_WITNESS
    assert replay_witness(wrong, bad)


def test_eventual_monotone_double_well():
    rep = check_eventual_monotone(double_well(1), 2.0, n_pairs=2000)
    assert rep.verdict == Verdict.SATISFIED_EMPIRICALLY
    assert rep.witness["lambda1_hat"] >= 3.0 - 1e-6
    assert replay_witness(double_well(1), rep)
    with pytest.raises(ValueError):
        check_eventual_monotone(ou(1), 0.0)


def test_monotone_on_large_sets_finds_far_center():
    rep = check_monotone_on_large_sets(double_well(1), 1.0, n_pairs=2000)
    assert rep.verdict == Verdict.SATISFIED_EMPIRICALLY
    assert rep.witness["z"] == [4.0]
    assert rep.witness["contraction_c"] > 0.0
    none = check_monotone_on_large_sets(double_well(1), 1.0, z_candidates=[[0.0]], n_pairs=500)
    assert none.verdict == Verdict.INCONCLUSIVE


def test_gradient_direction_search():
    rep = gradient_direction_search(double_well(1), [1.0], [[0.0], [1.0], [2.0]])
    assert rep.verdict == Verdict.SATISFIED_EMPIRICALLY
    assert rep.witness["pairs"][0]["z"] == [2.0]
    assert replay_witness(double_well(1), rep)
    miss = gradient_direction_search(double_well(1), [1.0], [[0.0]])
    assert miss.verdict == Verdict.INCONCLUSIVE
    with pytest.raises(ValueError):
        gradient_direction_search(ou(1), [0.0], [[0.0]])


def test_hessian_at_minima_double_well():
    rep = check_hessian_at_minima(double_well(1), [[1.0], [-1.0]])
    assert rep.verdict == Verdict.SATISFIED_EMPIRICALLY
    assert rep.witness["min_eigenvalue"] == pytest.approx(2.0)
    assert [p["potential"] for p in rep.witness["points"]] == [-0.25, -0.25]
    assert replay_witness(double_well(1), rep)
    # the minima of the 2-d well form a circle: flat direction along it
    flat = check_hessian_at_minima(double_well(2), [[1.0, 0.0]])
    assert flat.verdict == Verdict.VIOLATED_WITH_WITNESS
    assert flat.witness["reason"] == "hessian_not_positive"
    assert flat.witness["min_eigenvalue"] == pytest.approx(0.0, abs=1e-12)


def test_hessian_at_minima_rejects_saddle():
    saddle = expression_field(["-2*x1", "2*x2"], dim=2, potential="x1**2 - x2**2")
    rep = check_hessian_at_minima(saddle, [[0.0, 0.0]])
    assert rep.verdict == Verdict.VIOLATED_WITH_WITNESS
    assert rep.witness["reason"] == "hessian_not_positive"
    assert rep.witness["z"] == [0.0, 0.0]
    assert rep.witness["min_eigenvalue"] == pytest.approx(-2.0, abs=1e-5)
    assert replay_witness(saddle, rep)


def test_hessian_at_minima_checks_the_points():
    f = double_well(1)
    off = check_hessian_at_minima(f, [[0.5]])
    assert off.witness["reason"] == "not_critical"
    assert replay_witness(f, off)
    # 0 is critical but V(0) = 0 > V(1)
    higher = check_hessian_at_minima(f, [[1.0], [0.0]])
    assert higher.witness["reason"] == "not_global" and higher.witness["z"] == [0.0]
    assert replay_witness(f, higher)
    with pytest.raises(FieldDefinitionError):
        check_hessian_at_minima(linear([[0.0, 1.0], [-1.0, 0.0]]), [[0.0, 0.0]])
    with pytest.raises(ValueError):
        check_hessian_at_minima(f, [])
    with pytest.raises(ValueError):
        check_hessian_at_minima(f, [[1.0, 0.0]])


# ---------- controls ----------


def test_swift_control_lands_ball():
    rep = swift_control(ou(1), 1.0, [0.0], 0.1, [1.0], delta=0.1)
    assert rep.all_landed
    assert rep.residual < 1e-3
    assert rep.t0 == pytest.approx(rep.t0_bound)
    assert len(rep.times) == 401 and rep.times[-1] == rep.t0
    with pytest.raises(ProofHypothesisError):
        swift_control(ou(1), 1.0, [0.0], 0.1, [1.0], t0=1.0)


def test_swift_control_zero_drift_is_exact():
    rep = swift_control(linear([[0.0, 0.0], [0.0, 0.0]]), 2.0, [0.0, 0.0], 0.5, [1.0, -1.0])
    assert rep.residual < 1e-12
    assert np.allclose(rep.control[-1], [0.5, -0.5])


def test_controls_reject_unsupported_fields():
    circle = build_from_dict({"kind": "circle_stratonovich"})
    with pytest.raises(FieldDefinitionError):
        swift_control(circle, 1.0, [0.0], 0.1, [1.0])
    with pytest.raises(ValueError):
        swift_control(ou(1), 0.0, [0.0], 0.1, [1.0])


def test_contraction_witness_ou():
    rep = contraction_witness(ou(2), 1.0, 1.0, [0.0, 0.0], c_estimate=1.0, mesh_n=16)
    assert rep.T0 == pytest.approx(math.log(9.0))
    assert rep.witness_ok and rep.ratio < 1.0 / 8.0


def test_contraction_witness_needs_contraction():
    with pytest.raises(ProofHypothesisError):
        contraction_witness(double_well(1), 1.0, 1.0, [0.0], n_pairs=500)
