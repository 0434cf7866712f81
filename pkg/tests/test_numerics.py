import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special

from telegas import numerics as nm

X = np.concatenate([[0.0, 1e-8, 1e-3], np.linspace(0.01, 14.9, 40), [15.0, 15.1, 30.0, 100.0, 700.0, 1e4]])


@pytest.mark.parametrize("order", [0, 1])
def test_bessel_scaled_matches_scipy(order):
    ours = nm.bessel_i_scaled(order, X)
    ref = special.ive(order, X)
    np.testing.assert_allclose(ours, ref, rtol=1e-13, atol=1e-300)


@pytest.mark.parametrize("order", [0, 1])
def test_bessel_unscaled_matches_scipy(order):
    x = X[X < 700]
    np.testing.assert_allclose(nm.bessel_i(order, x), special.iv(order, x), rtol=1e-13)


def test_bessel_known_values():
    assert nm.bessel_i(0, 0.0) == 1.0
    assert nm.bessel_i(1, 0.0) == 0.0
    assert nm.bessel_i(0, 1.0) == pytest.approx(1.2660658777520082, rel=1e-15)
    assert nm.bessel_i(1, 1.0) == pytest.approx(0.5651591039924851, rel=1e-15)


def test_bessel_ratios_at_zero():
    # e^-x I1(x)/x -> 1/2 and e^-x I2(x)/x -> 0 as x -> 0
    assert nm.bessel_i1_over_x_scaled(0.0) == pytest.approx(0.5)
    assert nm.bessel_i2_over_x_scaled(0.0) == 0.0
    x = np.array([1e-6, 0.5, 3.0, 20.0, 200.0])
    np.testing.assert_allclose(nm.bessel_i1_over_x_scaled(x), special.ive(1, x) / x, rtol=1e-12)
    np.testing.assert_allclose(nm.bessel_i2_over_x_scaled(x), special.ive(2, x) / x, rtol=1e-12)


def test_bessel_rejects_negative():
    with pytest.raises(ValueError):
        nm.bessel_i(0, -1.0)


def test_series_and_asymptotic_overlap():
    # The two branches agree where they meet.
    x = 15.0
    for order in (0, 1):
        s = nm.bessel_i_series(order, x) * math.exp(-x)
        a = nm.bessel_i_asymptotic_scaled(order, x)
        assert s == pytest.approx(a, rel=1e-13)


@pytest.mark.parametrize("a,b", [(1, 5), (3, 3), (5, 1), (0.5, 2.5), (10, 20)])
def test_reg_inc_beta_matches_scipy(a, b):
    p = np.linspace(0, 1, 51)
    np.testing.assert_allclose(nm.reg_inc_beta(p, a, b), special.betainc(a, b, p), rtol=1e-12, atol=1e-15)


def test_reg_inc_beta_edges_and_errors():
    assert nm.reg_inc_beta(0.0, 2, 3) == 0.0
    assert nm.reg_inc_beta(1.0, 2, 3) == 1.0
    with pytest.raises(ValueError):
        nm.reg_inc_beta(1.5, 2, 3)
    with pytest.raises(ValueError):
        nm.reg_inc_beta(0.5, 0, 3)


@given(st.integers(0, 2 ** 20).map(lambda k: k / 2 ** 20), st.floats(0.2, 30), st.floats(0.2, 30))
def test_reg_inc_beta_symmetry(p, a, b):
    # I_p(a, b) = 1 - I_{1-p}(b, a); dyadic p keeps 1 - p exact
    assert nm.reg_inc_beta(p, a, b) == pytest.approx(1 - nm.reg_inc_beta(1 - p, b, a), abs=1e-12)


def test_integrate_polynomial_and_singular():
    r = nm.integrate(lambda x: x ** 3, 0.0, 2.0)
    assert r.value == pytest.approx(4.0, rel=1e-14)
    # Removable endpoint singularity: sin(x)/x, never evaluated at 0.
    r = nm.integrate(lambda x: np.sin(x) / x, 0.0, 1.0, 1e-13)
    assert r.value == pytest.approx(0.946083070367183, rel=1e-13)
    # Integrable endpoint singularity.
    r = nm.integrate(lambda x: 1 / np.sqrt(x), 0.0, 1.0, 1e-9)
    assert r.value == pytest.approx(2.0, abs=1e-8)


def test_integrate_infinite_tails():
    r = nm.integrate(lambda t: np.exp(-t), 0.0, math.inf, 1e-12)
    assert r.value == pytest.approx(1.0, abs=1e-12)
    # t^-1.5 tail: int_1^inf = 2
    r = nm.integrate(lambda t: t ** -1.5, 1.0, math.inf, 1e-10, tail="inverse-square")
    assert r.value == pytest.approx(2.0, abs=1e-9)


def test_integrate_errors():
    with pytest.raises(ValueError):
        nm.integrate(lambda x: x, 1.0, 0.0)
    with pytest.raises(ValueError):
        nm.integrate(lambda x: x, -math.inf, 0.0)
    with pytest.raises(ValueError):
        nm.integrate(lambda x: x, 0.0, math.inf, tail="bogus")
    with pytest.raises(FloatingPointError):
        nm.integrate(lambda x: np.where(x > 0.5, np.nan, x), 0.0, 1.0)
    with pytest.raises(nm.QuadratureBudgetError) as info:
        nm.integrate(lambda x: np.sin(1 / x), 0.0, 1.0, 1e-14, max_evals=300)
    assert math.isfinite(info.value.best.value)


def test_integrate_pieces_sum():
    edges = np.array([0.0, 0.5, 0.5, 1.0, 3.0])
    vals, errs = nm.integrate_pieces(lambda x: np.cos(x), edges, 1e-12)
    assert vals[1] == 0.0
    assert vals.sum() == pytest.approx(math.sin(3.0), abs=1e-12)
    np.testing.assert_allclose(np.cumsum(vals), np.sin(edges[1:]), atol=1e-12)
    with pytest.raises(ValueError):
        nm.integrate_pieces(np.cos, [1.0, 0.0])


def test_geometric_edges():
    e = nm.geometric_edges(0.0, 10.0, 0.01)
    assert e[0] == 0.0 and e[-1] == 10.0
    assert np.all(np.diff(e) > 0)
    assert e[1] == pytest.approx(0.01)
    assert e[-2] == pytest.approx(9.99)
    one = nm.geometric_edges(0.0, 10.0, 0.01, both_ends=False)
    assert one[1] == pytest.approx(0.01) and one[-1] == 10.0
    assert list(nm.geometric_edges(1.0, 1.0, 0.1)) == [1.0, 1.0]


def test_series_sum():
    r = nm.series_sum(lambda n: 1.0 / 2 ** n, 1e-16, 1000)
    assert r.value == pytest.approx(2.0, rel=1e-15)
    r = nm.series_sum(lambda n: 1.0 / (n * n), 1e-3, 10_000, start=1,
                      envelope=lambda n: 1.0 / n)
    assert r.terms >= 1000
    with pytest.raises(nm.SeriesBudgetError) as info:
        nm.series_sum(lambda n: 1.0 / (n + 1), 1e-12, 100)
    assert info.value.partial.terms == 100


@given(st.floats(0.0, 5.0), st.floats(0.1, 5.0))
def test_integrate_exponential(a, w):
    r = nm.integrate(lambda x: np.exp(-x), a, a + w, 1e-12)
    assert r.value == pytest.approx(math.exp(-a) - math.exp(-a - w), abs=2e-12)


def test_bessel_order_two_rejected():
    with pytest.raises(ValueError):
        nm.bessel_i_scaled(2, 1.0)


@given(st.floats(0.0, 1.0), st.floats(0.2, 30), st.floats(0.2, 30))
def test_reg_inc_beta_vs_scipy_property(p, a, b):
    assert nm.reg_inc_beta(p, a, b) == pytest.approx(float(special.betainc(a, b, p)), rel=1e-10, abs=1e-14)
