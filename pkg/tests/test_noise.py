import numpy as np
import pytest
from scipy.stats import kstest

from rdsync.core.errors import GridAlignmentError, WindowError
from rdsync.noise import derive_seed, derive_seeds, mix64, sample_path, shift, value
from rdsync.noise.seeds import GOLDEN_GAMMA, MASK64

DELTA = 1e-3


def test_value_at_zero_is_zero():
    p = sample_path(7, 3, DELTA, (-1.0, 1.0))
    assert np.array_equal(value(p, 0.0), np.zeros(3))


def test_same_seed_same_increments():
    a = sample_path(11, 2, DELTA, (-2.0, 2.0))
    b = sample_path(11, 2, DELTA, (-2.0, 2.0))
    assert np.array_equal(a.increments(-2000, 2000), b.increments(-2000, 2000))
    assert not np.array_equal(a.increments(0, 10), sample_path(12, 2, DELTA, (0.0, 1.0)).increments(0, 10))


def test_increments_independent_of_window():
    wide = sample_path(3, 1, DELTA, (-10.0, 10.0))
    narrow = sample_path(3, 1, DELTA, (0.0, 1.0))
    assert np.array_equal(wide.increments(0, 1000), narrow.increments(0, 1000))


def test_increments_on_dyadic_lattice():
    inc = sample_path(5, 2, DELTA, (0.0, 5.0)).increments(0, 5000)
    scaled = np.ldexp(inc, 32)
    assert np.array_equal(scaled, np.rint(scaled))


def test_value_is_signed_partial_sum():
    p = sample_path(9, 2, DELTA, (-1.0, 1.0))
    assert np.array_equal(value(p, DELTA), p.increment(0))
    assert np.array_equal(value(p, -DELTA), -p.increment(-1))
    rng = np.random.default_rng(0)
    for _ in range(100):
        s, t = sorted(int(k) for k in rng.integers(-1000, 1001, size=2))
        direct = np.sum(p.increments(s, t), axis=0) if t > s else np.zeros(2)
        assert np.array_equal(value(p, t * DELTA) - value(p, s * DELTA), direct)


def test_shift_identity_and_group():
    p = sample_path(21, 2, DELTA, (-3.0, 3.0))
    assert shift(p, 0.0) is p
    s, u = 0.5, -1.25
    assert np.array_equal(shift(shift(p, s), u).increments(-500, 500), shift(p, s + u).increments(-500, 500))


def test_shift_value_identity_bitwise():
    p = sample_path(4, 3, DELTA, (0.0, 1.0))
    assert np.array_equal(value(shift(p, 3 * DELTA), 2 * DELTA), value(p, 5 * DELTA) - value(p, 3 * DELTA))
    rng = np.random.default_rng(1)
    q = sample_path(99, 1, DELTA, (-2.0, 2.0))
    for _ in range(200):
        a, b = (int(k) for k in rng.integers(-1000, 1001, size=2))
        if not -2000 <= a + b <= 2000:
            continue
        lhs = value(shift(q, a * DELTA), b * DELTA)
        rhs = value(q, (a + b) * DELTA) - value(q, a * DELTA)
        assert np.array_equal(lhs, rhs)


def test_window_and_grid_errors():
    p = sample_path(1, 1, DELTA, (0.0, 1.0))
    with pytest.raises(WindowError):
        value(p, 1.5)
    with pytest.raises(WindowError):
        shift(p, -0.5)
    with pytest.raises(GridAlignmentError):
        value(p, 0.5 * DELTA)
    with pytest.raises(WindowError):
        sample_path(1, 1, DELTA, (1.0, 2.0))
    with pytest.raises(ValueError):
        sample_path(1, 0, DELTA, (0.0, 1.0))


def test_increments_are_standard_normal_after_scaling():
    inc = sample_path(31, 1, DELTA, (0.0, 10.0)).increments(0, 10_000)[:, 0]
    assert kstest(inc / np.sqrt(DELTA), "norm").pvalue > 1e-3


def test_increments_uncorrelated_across_steps_and_components():
    n = 100_000
    inc = sample_path(32, 2, DELTA, (0.0, n * DELTA)).increments(0, n)
    bound = 4.0 / np.sqrt(n)
    # lag 1 crosses the 4096-step block boundaries too
    assert abs(np.corrcoef(inc[:-1, 0], inc[1:, 0])[0, 1]) < bound
    assert abs(np.corrcoef(inc[:, 0], inc[:, 1])[0, 1]) < bound
    assert np.var(inc[:, 1]) / DELTA == pytest.approx(1.0, abs=4.0 * np.sqrt(2.0 / n))


def test_derive_seed_is_documented_mix():
    assert derive_seed(5, 0) == mix64(5 + GOLDEN_GAMMA)
    assert derive_seed(5, 3) == mix64((5 + 4 * GOLDEN_GAMMA) & MASK64)
    seeds = derive_seeds(5, 100)
    assert len(set(seeds)) == 100
    assert all(0 <= s <= MASK64 for s in seeds)
    with pytest.raises(ValueError):
        derive_seed(5, -1)


@pytest.mark.slow
def test_unit_variance_at_time_one():
    delta = 0.25
    w1 = np.array([value(sample_path(s, 1, delta, (0.0, 1.0)), 1.0)[0] for s in derive_seeds(0, 5000)])
    assert np.var(w1) == pytest.approx(1.0, abs=0.08)
    assert abs(np.mean(w1)) < 4 * np.sqrt(1.0 / 5000)
