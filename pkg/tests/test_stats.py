import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from telegas import stats as sts

seeds = st.integers(0, 2 ** 31)


def uniform_cdf(x):
    return np.clip(np.asarray(x, dtype=float), 0.0, 1.0)


def test_sample_sorts_and_counts():
    s = sts.EmpiricalSample.from_values([3.0, 1.0, 2.0], [True, False, False])
    np.testing.assert_array_equal(s.values, [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(s.censored, [False, False, True])
    assert s.n == 3 and s.n_censored == 1
    assert s.censored_fraction == pytest.approx(1 / 3)
    assert s.horizon == 3.0
    assert sts.EmpiricalSample.from_values([1.0]).horizon == math.inf
    with pytest.raises(ValueError):
        sts.EmpiricalSample.from_values([])
    with pytest.raises(ValueError):
        sts.EmpiricalSample(np.array([1.0, 2.0]), np.array([True]))


def test_ecdf_denominators():
    s = sts.EmpiricalSample.from_values([1.0, 2.0, 3.0, 4.0], [False, False, False, True])
    assert sts.ecdf(s, 2.0) == pytest.approx(2 / 3)
    assert sts.ecdf(s, 2.0, denominator="all") == pytest.approx(0.5)
    np.testing.assert_allclose(sts.ecdf(s, [0.0, 3.0]), [0.0, 1.0])
    with pytest.raises(ValueError):
        sts.ecdf(sts.EmpiricalSample.from_values([1.0], [True]), 1.0)


def test_ks_matches_scipy_for_continuous_reference():
    x = np.random.default_rng(0).uniform(size=500)
    ours = sts.ks_one_sample(sts.EmpiricalSample.from_values(x), uniform_cdf)
    ref = sps.kstest(x, "uniform").statistic
    assert ours.statistic == pytest.approx(ref, abs=1e-14)
    assert ours.threshold == pytest.approx(1.628 / math.sqrt(500))
    assert ours.passed


def test_ks_atom_aware():
    # Sample from 0.5 * delta_0.5 + 0.5 * U(0, 1); the exact law passes, the
    # atom-blind version of the same CDF sees a spurious jump.
    rng = np.random.default_rng(3)
    n = 4000
    x = np.where(rng.random(n) < 0.5, 0.5, rng.uniform(size=n))

    def cdf(t):
        t = np.asarray(t, dtype=float)
        return 0.5 * np.clip(t, 0, 1) + 0.5 * (t >= 0.5)

    def cdf_left(t):
        t = np.asarray(t, dtype=float)
        return 0.5 * np.clip(t, 0, 1) + 0.5 * (t > 0.5)

    s = sts.EmpiricalSample.from_values(x)
    good = sts.ks_one_sample(s, cdf, cdf_left=cdf_left)
    assert good.passed
    blind = sts.ks_one_sample(s, cdf)
    assert blind.statistic > 0.2


def test_ks_censoring_window():
    rng = np.random.default_rng(1)
    x = rng.exponential(size=3000)
    cens = x > 2.0
    x = np.where(cens, 2.0, x)
    rep = sts.ks_one_sample(sts.EmpiricalSample(x, cens), lambda t: 1 - np.exp(-np.asarray(t)))
    assert rep.window == 2.0
    assert rep.passed
    # Dropping the censored values instead would bias the CDF upwards.
    biased = sts.ks_one_sample(sts.EmpiricalSample.from_values(x[~cens]), lambda t: 1 - np.exp(-np.asarray(t)))
    assert not biased.passed


def test_ks_guards():
    with pytest.raises(ValueError):
        sts.ks_one_sample(sts.EmpiricalSample.from_values(np.linspace(0, 1, 10)), uniform_cdf)
    with pytest.raises(ValueError):
        sts.ks_one_sample(sts.EmpiricalSample.from_values(np.linspace(0, 1, 100)), uniform_cdf, level=0.2)


def test_ks_report_dict():
    rep = sts.ks_one_sample(sts.EmpiricalSample.from_values(np.linspace(0.005, 0.995, 100)), uniform_cdf)
    d = rep.to_dict()
    assert d["pass"] is True and d["window"] is None
    assert rep.statistic == pytest.approx(0.005)


@given(seeds, st.integers(50, 400))
@settings(max_examples=30)
def test_ks_invariant_under_monotone_map(seed, n):
    x = np.random.default_rng(seed).uniform(size=n)
    a = sts.ks_one_sample(sts.EmpiricalSample.from_values(x), uniform_cdf).statistic
    # Map through the exponential quantile; reference becomes the exponential CDF.
    y = -np.log1p(-x)
    b = sts.ks_one_sample(sts.EmpiricalSample.from_values(y), lambda t: -np.expm1(-np.asarray(t))).statistic
    assert a == pytest.approx(b, abs=1e-9)


@given(seeds, st.integers(50, 300), st.integers(50, 300))
@settings(max_examples=30)
def test_two_sample_matches_scipy_and_is_symmetric(seed, n, m):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=n), rng.normal(0.2, 1, size=m)
    A, B = sts.EmpiricalSample.from_values(a), sts.EmpiricalSample.from_values(b)
    r1, r2 = sts.ks_two_sample(A, B), sts.ks_two_sample(B, A)
    assert r1.statistic == pytest.approx(r2.statistic)
    assert r1.statistic == pytest.approx(sps.ks_2samp(a, b).statistic, abs=1e-12)
    assert r1.n_effective == pytest.approx(n * m / (n + m))


@given(seeds, st.integers(50, 500))
@settings(max_examples=30)
def test_ecdf_is_a_cdf(seed, n):
    s = sts.EmpiricalSample.from_values(np.random.default_rng(seed).normal(size=n))
    grid = np.linspace(-5, 5, 101)
    f = sts.ecdf(s, grid)
    assert np.all(np.diff(f) >= 0) and f[0] >= 0 and f[-1] <= 1


def test_mean_ci():
    x = np.arange(100, dtype=float)
    ci = sts.mc_mean_ci(x)
    assert ci.mean == pytest.approx(49.5)
    assert ci.half_width == pytest.approx(1.959963984540054 * np.std(x, ddof=1) / 10, rel=1e-12)
    assert not ci.degenerate
    flat = sts.mc_mean_ci(np.ones(50))
    assert flat.degenerate and flat.half_width == 0.0
    with pytest.raises(ValueError):
        sts.mc_mean_ci(np.ones(10))
    with pytest.raises(ValueError):
        sts.mc_mean_ci(x, level=1.5)
    assert sts.standard_error(x) == pytest.approx(np.std(x, ddof=1) / 10)


@pytest.mark.parametrize("beta", [0.5, 1.0])
def test_tail_slope_on_pareto(beta):
    rng = np.random.default_rng(4)
    x = (1 - rng.random(100_000)) ** (-1 / beta)
    slope = sts.tail_slope(sts.EmpiricalSample.from_values(x), 10.0)
    assert slope == pytest.approx(-beta, abs=0.06)


def test_tail_slope_guards():
    x = np.linspace(1, 2, 500)
    with pytest.raises(ValueError):
        sts.tail_slope(sts.EmpiricalSample.from_values(x), 10.0)
    with pytest.raises(ValueError):
        sts.tail_slope(sts.EmpiricalSample.from_values(np.linspace(1, 100, 500)), 10.0, 5.0)
