import math

import numpy as np
import pytest
from scipy.special import erf

from rdsync.core.errors import FieldDefinitionError
from rdsync.core.models import IntegratorSpec
from rdsync.measure import GibbsSpec, ball_mass, density, expect, mc_expect, moments, normalize, sample
from rdsync.measure.sampling import batch_means_se, occupation_fractions
from rdsync.vectorfield.builtins import build_from_dict, double_well, ou, v_e

SQRT2 = math.sqrt(2.0)


def test_gaussian_normalization_constant():
    g = normalize(ou(1), SQRT2)
    assert g.Z == pytest.approx(math.sqrt(2.0 * math.pi), abs=1e-6)
    assert g.refinement_error < 1e-6
    assert g.tail_mass_estimate < 1e-8


def test_gaussian_ball_mass_2d():
    g = normalize(ou(2), SQRT2)
    assert ball_mass(g, 1.0) == pytest.approx(1.0 - math.exp(-0.5), abs=1e-6)
    assert ball_mass(g, 0.0) == 0.0


def test_standard_gaussian_ball_1d():
    # sigma = sqrt(2) makes rho the standard normal
    assert ball_mass(normalize(ou(1), SQRT2), 1.0) == pytest.approx(0.682689, abs=1e-5)
    assert ball_mass(normalize(ou(1), 1.0), 0.7) == pytest.approx(erf(0.7), abs=1e-8)


def test_density_integrates_to_one_and_moments():
    g = normalize(double_well(2), 1.0)
    one = expect(g, lambda x: np.ones(x.shape[:-1]))
    assert one.value == pytest.approx(1.0, abs=1e-6)
    mean, second = moments(normalize(ou(2), 2.0))
    assert np.allclose(mean, 0.0, atol=1e-10)
    assert np.allclose(second, 2.0 * np.eye(2), atol=1e-6)
    assert expect(normalize(ou(1), 1.0), lambda x: x[..., 0]).value == pytest.approx(0.0, abs=1e-8)


def test_density_values():
    g = normalize(ou(1), SQRT2)
    assert density(g, [0.0]) == pytest.approx(1.0 / math.sqrt(2.0 * math.pi), rel=1e-6)


def test_double_well_z_refines():
    g = normalize(double_well(1), 1.0)
    assert abs(g.z_shifted - g.z_shifted_coarse) / g.z_shifted < 1e-6


def test_box_expands_for_wide_densities():
    g = normalize(ou(1), 4.0)
    assert g.box[1] > 5.0


def test_ball_mass_flattens_for_v_e():
    f = v_e()
    masses = [ball_mass(normalize(f, s), 2.0) for s in (1.0, 2.0, 4.0, 8.0)]
    assert all(a > b for a, b in zip(masses, masses[1:]))


def test_normalize_rejects_non_gradient_and_bad_sigma():
    with pytest.raises(FieldDefinitionError):
        normalize(build_from_dict({"kind": "expr", "expr": ["-x1"]}), 1.0)
    with pytest.raises(ValueError):
        normalize(ou(1), 0.0)
    with pytest.raises(ValueError):
        normalize(ou(4), 1.0)


def test_sample_edge_cases():
    g = normalize(ou(2), 1.0)
    assert sample(g, 0, seed=0).shape == (0, 2)
    a = sample(g, 10, seed=3, burn_in=1.0, thin=0.5)
    b = sample(g, 10, seed=3, burn_in=1.0, thin=0.5)
    assert a.shape == (10, 2) and np.array_equal(a, b)


def test_mc_expect_constant_has_zero_error():
    spec = GibbsSpec(field=ou(2), sigma=1.0, integrator=IntegratorSpec(dt=1e-2))
    est, se = mc_expect(spec, lambda x: np.full(x.shape[0], 3.5), 40, seed=0, burn_in=1.0, thin=0.5)
    assert est == 3.5 and se == 0.0


def test_batch_means_and_occupation():
    assert batch_means_se(np.ones(100)) == 0.0
    assert batch_means_se(np.array([1.0])) == 0.0
    frac = occupation_fractions(np.array([-1.0, -0.5, 0.5, 0.6]), [-2.0, 0.0, 2.0])
    assert np.allclose(frac, [0.5, 0.5])


@pytest.mark.slow
def test_ou_sample_covariance():
    spec = GibbsSpec(field=ou(2), sigma=1.0, integrator=IntegratorSpec(dt=1e-2))
    xs = sample(spec, 2000, seed=1, burn_in=5.0, thin=1.0)
    assert np.allclose(np.cov(xs.T), 0.5 * np.eye(2), atol=0.1)


@pytest.mark.slow
def test_gaussian_4d_second_moment_monte_carlo():
    spec = GibbsSpec(field=ou(4), sigma=1.0, integrator=IntegratorSpec(dt=1e-2))
    est, se = mc_expect(spec, lambda x: np.sum(x * x, axis=-1), 2000, seed=2, burn_in=5.0, thin=1.0)
    assert abs(est - 2.0) <= 4.0 * se + 0.05


@pytest.mark.slow
def test_double_well_histogram_matches_quadrature():
    f = double_well(1)
    g = normalize(f, 1.0)
    edges = np.linspace(-2.5, 2.5, 11)
    spec = GibbsSpec(field=f, sigma=1.0, integrator=IntegratorSpec(dt=1e-2))
    xs = sample(spec, 4000, seed=4, burn_in=5.0, thin=1.0)
    observed = occupation_fractions(xs, edges)
    cells = np.array([
        expect(g, lambda x, lo=lo, hi=hi: ((x[..., 0] >= lo) & (x[..., 0] < hi)).astype(float)).value
        for lo, hi in zip(edges[:-1], edges[1:])
    ])
    assert np.max(np.abs(observed - cells / cells.sum())) < 0.04
