import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bpre.cramer import (GaussianIncrements, RegimeError, cramer_series, cramer_term,
                         exact_exponent, integral_I1, key_identity_residual, lambda_series,
                         series_radius, solve_lambda, tail_ratio_prediction, tilted_moments)
from bpre.environment import CumulantSet
from bpre.normal import Phi_bar, mills

from conftest import geometric_pair


def legendre_exponent_standard(x, n):
    """Closed form for X = 3/2 + eps/2: psi(l) = 3l/2 + log cosh(l/2)."""
    lam = 2 * math.atanh(x / math.sqrt(n))
    psi = 1.5 * lam + math.log(math.cosh(lam / 2))
    mu_l = 1.5 + 0.5 * math.tanh(lam / 2)
    return lam, 0.5 * x * x + n * (psi - lam * mu_l)


@pytest.mark.parametrize("n", [16, 100, 400, 1600, 10_000])
@pytest.mark.parametrize("x", [0.1, 0.5, 1.0, 2.0, 3.0])
def test_solver_closed_form(standard_model, x, n):
    if x > 0.5 * math.sqrt(n) * 0.5:
        pytest.skip("outside the regime guard")
    lam_ref, expo_ref = legendre_exponent_standard(x, n)
    lam = solve_lambda(standard_model, x, n)
    assert lam == pytest.approx(lam_ref, rel=1e-12)
    # the exponent is a difference of O(n) terms, so absolute accuracy is ~ n * eps
    assert exact_exponent(standard_model, x, n) == pytest.approx(expo_ref, rel=1e-8, abs=1e-14 * n)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 4.0), st.sampled_from([64, 400, 2500, 10_000]))
def test_solver_residual(x, n):
    model = geometric_pair()
    if x > 0.5 * math.sqrt(n) * model.sigma:
        return
    lam = solve_lambda(model, x, n)
    s = model.sigma
    assert abs(n * (model.tilted_mean(lam) - model.mu) - x * s * math.sqrt(n)) <= 1e-10 * max(1, x * s * math.sqrt(n))


def test_solver_mixed_model_residual(mixed_model):
    s = mixed_model.sigma
    for n in (100, 400, 1600):
        for x in (0.3, 0.8, 2.5):
            if x > 0.5 * math.sqrt(n) * s:
                continue
            lam = solve_lambda(mixed_model, x, n)
            res = n * (mixed_model.tilted_mean(lam) - mixed_model.mu) - x * s * math.sqrt(n)
            assert abs(res) <= 1e-10 * max(1, x * s * math.sqrt(n))


@pytest.mark.parametrize("x,n", [(0.5, 100), (1.0, 400), (2.0, 400), (3.0, 10_000)])
def test_gaussian_surrogate_lambda(x, n):
    g = GaussianIncrements(1.0, 0.3)
    assert solve_lambda(g, x, n) == pytest.approx(x / (g.sigma * math.sqrt(n)), abs=1e-12)
    pred = tail_ratio_prediction(g, x, n)
    assert pred.cramer_term == 0.0 and pred.ratio_upper == 1.0 and pred.ratio_lower == 1.0


def test_lambda_zero_and_negative(standard_model):
    assert solve_lambda(standard_model, 0.0, 100) == 0.0
    with pytest.raises(ValueError):
        solve_lambda(standard_model, -1.0, 100)


def test_regime_guard(standard_model):
    # guard: 0.5 * sqrt(n) * lambda0 * sigma = 0.5 * 10 * 0.5 = 2.5 at n = 100
    solve_lambda(standard_model, 2.5, 100)
    with pytest.raises(RegimeError):
        solve_lambda(standard_model, 2.6, 100)


def test_lambda_series_small_t(mixed_model):
    cs = mixed_model.cumulants(6)
    for n in (400, 1600, 6400):
        t = 1.0 / math.sqrt(n)
        lam = solve_lambda(mixed_model, 1.0, n)
        assert abs(lambda_series(cs, t) - lam) < 50 * t**4


def test_cramer_series_worked_value():
    # gamma_2 = 1, gamma_3 = 6, higher cumulants 0: 1 - 0.45 + 0.27
    cs = CumulantSet((0.0, 1.0, 6.0, 0.0, 0.0, 0.0))
    assert cramer_series(cs, 0.1, radius=0.5) == pytest.approx(0.82, abs=1e-12)
    with pytest.raises(ValueError):
        cramer_series(cs, 0.3)


def test_cramer_series_symmetric_law(standard_model):
    cs = standard_model.cumulants(6)
    # gamma_3 = gamma_5 = 0, so only the middle coefficient survives
    t = 0.05
    c1 = (cs[4] * cs[2]) / (24 * cs[2] ** 3)
    assert cramer_series(cs, t) == pytest.approx(c1 * t, rel=1e-14)
    assert series_radius(cs) == pytest.approx(0.5)


def test_truncation_error_order(mixed_model):
    # the dropped terms are O(t^3) inside L, hence O(x^6 / n^2) in the exponent
    res = [key_identity_residual(mixed_model, 1.0, n) for n in (400, 1600, 6400)]
    slope = np.polyfit(np.log([400, 1600, 6400]), np.log(res), 1)[0]
    assert -2.3 < slope < -1.7


def test_cramer_term_sign_flip(mixed_model):
    cs = mixed_model.cumulants(6)
    up, down = cramer_term(cs, 1.0, 400), cramer_term(cs, -1.0, 400)
    pred = tail_ratio_prediction(mixed_model, 1.0, 400)
    assert pred.ratio_upper == pytest.approx(math.exp(up))
    assert pred.ratio_lower == pytest.approx(math.exp(down))
    assert up * down < 0


def test_prediction_fields(standard_model):
    p = tail_ratio_prediction(standard_model, 3.0, 400)
    assert not p.normal_zone and math.isnan(p.normal_zone_ratio)
    q = tail_ratio_prediction(standard_model, 1.0, 400)
    assert q.normal_zone and q.normal_zone_ratio == 1.0
    assert q.row()[:2] == (1.0, 400)


def test_tilted_moments(standard_model):
    tm = tilted_moments(standard_model, 0.4)
    assert tm.mu_lambda == pytest.approx(1.5 + 0.5 * math.tanh(0.2), rel=1e-14)
    assert tm.sigma2_lambda == pytest.approx(0.25 / math.cosh(0.2) ** 2, rel=1e-13)
    # |X - mu_l| is (1/2)(1 -+ tanh), weighted by the tilted probabilities
    th = math.tanh(0.2)
    w_hi = (1 + th) / 2
    rho = w_hi * (0.5 * (1 - th)) ** 3 + (1 - w_hi) * (0.5 * (1 + th)) ** 3
    assert tm.rho_lambda == pytest.approx(rho, rel=1e-13)
    with pytest.raises(ValueError):
        tilted_moments(standard_model, 1.5)


@pytest.mark.parametrize("c", [1e-3, 0.1, 1.0, 5.0, 30.0, 1e3, 1e4])
def test_I1_closed_form(c):
    # integration by parts: c * int e^{-cy} (Phi(y) - 1/2) dy = e^{c^2/2} (1 - Phi(c))
    val = integral_I1(c, 1.0, 1)
    assert val == pytest.approx(mills(c), rel=1e-10)


def test_I1_large_argument():
    assert integral_I1(1e6, 1.0, 1) <= 1e-6


def test_I1_split_invariance():
    assert integral_I1(0.5, 2.0, 100) == pytest.approx(integral_I1(2.0, 0.5, 100), rel=1e-13)
    with pytest.raises(ValueError):
        integral_I1(0.0, 1.0, 1)


def test_mills_matches_direct_product():
    for x in (0.0, 1.0, 3.0, 8.0):
        assert mills(x) == pytest.approx(math.exp(x * x / 2) * Phi_bar(x), rel=1e-12)
    assert mills(40.0) == pytest.approx(1 / (40 * math.sqrt(2 * math.pi)) * (1 - 1 / 1600 + 3 / 1600**2), rel=1e-8)


@pytest.mark.parametrize("gam,t,expect", [
    ((1.5, 0.25, 0.0, -0.125, 0.0, 0.25), 0.0, 0.0),
    ((0.0, 1.0, 6.0, 0.0, 0.0, 0.0), 0.0, 1.0),
    ((0.0, 1.0, 0.0, 24.0, 0.0, 0.0), 0.1, 0.1),
])
def test_cramer_series_reference_values(gam, t, expect):
    assert cramer_series(CumulantSet(gam), t) == pytest.approx(expect, abs=1e-15)


def test_two_point_against_bisection(standard_model):
    from scipy.optimize import brentq
    target = 1.0 * standard_model.sigma / math.sqrt(100)
    ref = brentq(lambda l: standard_model.tilted_mean(l) - standard_model.mu - target, 0.0, 1.0,
                 xtol=1e-15, rtol=1e-15)
    assert solve_lambda(standard_model, 1.0, 100) == pytest.approx(ref, abs=1e-12)


def test_zero_x_prediction(mixed_model):
    p = tail_ratio_prediction(mixed_model, 0.0, 400)
    assert p.ratio_upper == 1.0 and p.ratio_lower == 1.0 and p.lambda_x == 0.0


def test_upper_ratio_worked_example():
    # gamma_2 = 1, gamma_3 = 6, x = 1, n = 100: exponent (1/10) L(0.1), with the t^2 term kept
    cs = CumulantSet((0.0, 1.0, 6.0, 0.0, 0.0, 0.0))
    assert cramer_term(cs, 1.0, 100) == pytest.approx(0.1 * (1 - 0.45 + 0.27), abs=1e-14)
