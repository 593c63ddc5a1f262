import math

import numpy as np
import pytest

from rdsync.core.enums import Scheme
from rdsync.core.errors import GridAlignmentError
from rdsync.core.models import IntegratorSpec
from rdsync.flow import (
    evolve,
    evolve_ensemble,
    evolve_seeds,
    pullback_evolve,
    step,
    step_jacobian,
    tangent_evolve,
    write_trajectory_csv,
)
from rdsync.noise import derive_seeds, sample_path
from rdsync.vectorfield.builtins import double_well, linear, ou, v_e
from rdsync.vectorfield.field import eval_jacobian

EM = IntegratorSpec(scheme=Scheme.EULER_MARUYAMA, dt=1e-3)


def test_single_steps():
    coarse = IntegratorSpec(scheme=Scheme.EULER_MARUYAMA, dt=0.1)
    assert step(ou(1), coarse, [1.0], [0.0], sigma=0.0)[0] == pytest.approx(0.9)
    implicit = IntegratorSpec(scheme=Scheme.SPLIT_STEP_IMPLICIT, dt=0.1)
    assert step(ou(1), implicit, [1.0], [0.0], sigma=0.0)[0] == pytest.approx(1.0 / 1.1)
    for scheme in Scheme:
        spec = IntegratorSpec(scheme=scheme, dt=0.1)
        assert step(double_well(1), spec, [1.0], [0.0], sigma=0.0)[0] == pytest.approx(1.0)


def test_step_jacobian_matches_finite_difference():
    spec = IntegratorSpec(scheme=Scheme.TAMED_EULER, dt=0.05)
    f = v_e()
    x = np.array([0.4, -0.9])
    dW = np.array([0.01, -0.02])
    J = step_jacobian(f, spec, x, dW)
    h = 1e-6
    fd = np.stack([(step(f, spec, x + h * e, dW) - step(f, spec, x - h * e, dW)) / (2 * h) for e in np.eye(2)], axis=-1)
    assert np.allclose(J, fd, atol=1e-6)


def test_ou_deterministic_endpoint():
    p = sample_path(0, 1, 1e-3, (0.0, 1.0))
    traj = evolve(ou(1), EM, 0.0, p, [1.0], 0.0, 1.0)
    assert abs(traj.end[0] - math.exp(-1.0)) < 2e-3
    assert traj.times[0] == 0.0 and traj.times[-1] == pytest.approx(1.0)


def test_record_every_keeps_endpoint():
    p = sample_path(0, 2, 1e-3, (0.0, 1.0))
    full = evolve(double_well(2), EM, 1.0, p, [0.5, 0.5], 0.0, 1.0)
    thin = evolve(double_well(2), EM, 1.0, p, [0.5, 0.5], 0.0, 1.0, record_every=300)
    assert len(thin.times) == 5
    assert np.array_equal(full.end, thin.end)


@pytest.mark.parametrize("field", [ou(2), double_well(2), v_e()])
@pytest.mark.parametrize("scheme", list(Scheme))
def test_cocycle_identity_bitwise(field, scheme):
    spec = IntegratorSpec(scheme=scheme, dt=1e-2)
    p = sample_path(17, field.m, 1e-2, (0.0, 3.0))
    x0 = [0.3, -0.4]
    s, t = 1.23, 1.77
    direct = evolve(field, spec, 1.0, p, x0, 0.0, s + t).end
    mid = evolve(field, spec, 1.0, p, x0, 0.0, s).end
    split = evolve(field, spec, 1.0, p.shift(s), mid, 0.0, t).end
    assert np.array_equal(direct, split)


def test_zero_noise_ou_converges_at_first_order():
    errors = []
    for dt in (1e-2, 5e-3, 2.5e-3):
        spec = IntegratorSpec(scheme=Scheme.EULER_MARUYAMA, dt=dt)
        p = sample_path(0, 1, dt, (0.0, 1.0))
        errors.append(abs(evolve(ou(1), spec, 0.0, p, [1.0], 0.0, 1.0).end[0] - math.exp(-1.0)))
    orders = [math.log2(a / b) for a, b in zip(errors, errors[1:])]
    assert min(orders) >= 0.9
    assert errors[-1] < errors[0] / 3.0


def test_ensemble_of_one_equals_evolve():
    p = sample_path(3, 2, 1e-3, (0.0, 2.0))
    traj = evolve(double_well(2), EM, 1.0, p, [0.1, 0.2], 0.0, 2.0)
    ens = evolve_ensemble(double_well(2), EM, 1.0, p, [[0.1, 0.2]], 0.0, 2.0)
    assert np.array_equal(ens.endpoints[0], traj.end)
    assert ens.n_exploded == 0


def test_ou_shared_noise_cancels():
    p = sample_path(8, 2, 1e-3, (0.0, 2.0))
    x, y = np.array([1.0, 0.0]), np.array([-1.0, 0.5])
    ends = evolve_ensemble(ou(2), EM, 1.0, p, [x, y], 0.0, 2.0).endpoints
    expected = (x - y) * (1.0 - 1e-3) ** 2000
    assert np.allclose(ends[0] - ends[1], expected, atol=1e-10)


def test_evolve_seeds_matches_per_path_runs():
    f = double_well(2)
    seeds = derive_seeds(1, 3)
    paths = [sample_path(s, 2, 1e-3, (0.0, 1.0)) for s in seeds]
    X0 = np.array([[1.0, 0.0], [0.0, -1.0]])
    res = evolve_seeds(f, EM, 1.0, paths, X0, 0.0, 1.0, checkpoints=[0.5, 1.0])
    assert res.states.shape == (2, 3, 2, 2)
    for i, p in enumerate(paths):
        single = evolve_ensemble(f, EM, 1.0, p, X0, 0.0, 1.0).endpoints
        assert np.array_equal(res.end[i], single)


def test_tangent_flow_ou_and_orthonormal_frame():
    p = sample_path(5, 3, 1e-3, (0.0, 20.0))
    seen = []
    traj, frame = tangent_evolve(ou(3), EM, 1.0, p, np.zeros(3), 3, 0.0, 20.0, qr_every=10,
                                 on_qr=lambda s, lr: seen.append(s))
    lam = frame.exponents()
    assert np.allclose(lam, math.log(1.0 - 1e-3) / 1e-3, atol=1e-9)
    assert np.allclose(frame.frame.T @ frame.frame, np.eye(3), atol=1e-10)
    assert seen[0] == 10 and seen[-1] == 20000


def test_one_dimensional_tangent_oracle():
    f = double_well(1)
    dt, T = 1e-3, 10.0
    p = sample_path(12, 1, dt, (0.0, T))
    traj = evolve(f, EM, 1.0, p, [0.5], 0.0, T)
    _, frame = tangent_evolve(f, EM, 1.0, p, [0.5], 1, 0.0, T, qr_every=1)
    states = traj.states[:-1, 0]
    oracle = np.sum(np.log(np.abs(1.0 + dt * eval_jacobian(f, states[:, None])[:, 0, 0])))
    assert frame.log_r_accumulators[0] == pytest.approx(oracle, abs=1e-8)


def test_pullback_zero_time_and_definition():
    p = sample_path(2, 1, 1e-3, (-5.0, 0.0))
    assert np.array_equal(pullback_evolve(ou(1), EM, 1.0, p, [0.7], 0.0), [0.7])
    direct = evolve(ou(1), EM, 1.0, p.shift(-5.0), [0.7], 0.0, 5.0).end
    assert np.array_equal(pullback_evolve(ou(1), EM, 1.0, p, [0.7], 5.0), direct)


def test_dt_must_match_noise_grid():
    p = sample_path(0, 1, 1e-3, (0.0, 1.0))
    with pytest.raises(GridAlignmentError):
        evolve(ou(1), IntegratorSpec(dt=2e-3), 1.0, p, [0.0], 0.0, 1.0)


def test_linear_zero_drift_moves_with_noise_only():
    p = sample_path(4, 2, 1e-3, (0.0, 1.0))
    end = evolve(linear([[0.0, 0.0], [0.0, 0.0]]), EM, 2.0, p, [0.0, 0.0], 0.0, 1.0).end
    assert np.allclose(end, 2.0 * p.value(1.0), atol=1e-12)


def test_trajectory_csv(tmp_path):
    p = sample_path(0, 2, 1e-3, (0.0, 0.01))
    traj = evolve(ou(2), EM, 1.0, p, [1.0, 2.0], 0.0, 0.01)
    out = write_trajectory_csv(traj, tmp_path / "t.csv")
    lines = out.read_text().splitlines()
    assert lines[0] == "t,x1,x2"
    assert len(lines) == 12
    assert [float(v) for v in lines[-1].split(",")[1:]] == traj.end.tolist()


@pytest.mark.slow
def test_tamed_double_well_does_not_explode():
    spec = IntegratorSpec(dt=1e-3)
    paths = [sample_path(s, 2, 1e-3, (0.0, 100.0)) for s in derive_seeds(0, 20)]
    res = evolve_seeds(double_well(2), spec, 1.0, paths, np.array([[1.0, 0.0]]), 0.0, 100.0)
    assert not np.any(res.exploded)
