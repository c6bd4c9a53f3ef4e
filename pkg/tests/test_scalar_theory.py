import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pspinlab.scalar_theory import (ModelParams, e_infinity, e_zero, g_r_concavity_check,
                                    g_r_hessian, h_poly, ipow, j_function, omega_fn,
                                    sigma_u_eigenvalues, theta, theta_branch)

ps = st.integers(min_value=3, max_value=40)
overlaps = st.floats(min_value=-0.999, max_value=0.999)


def j_mp(p, u):
    # independent 40-digit evaluation of the three-term closed form
    mp.mp.dps = 40
    e = 2 * mp.sqrt(mp.mpf(p - 1) / p)
    u = mp.mpf(u)
    s = mp.sqrt(u * u - e * e)
    return float(-(u / e**2) * s - mp.log(-u + s) + mp.log(e))


def test_model_params_validation():
    with pytest.raises(ValueError):
        ModelParams(1)
    with pytest.raises(ValueError):
        ModelParams(3, 1)
    with pytest.raises(ValueError):
        ModelParams(3.5)


@pytest.mark.parametrize("p,expected", [(2, math.sqrt(2)), (4, math.sqrt(3))])
def test_e_infinity_values(p, expected):
    assert e_infinity(ModelParams(p)) == pytest.approx(expected, abs=1e-15)


def test_e_infinity_increases_to_two():
    vals = [e_infinity(ModelParams(p)) for p in range(2, 400)]
    assert np.all(np.diff(vals) > 0) and vals[-1] < 2 and vals[-1] > 1.99


@given(st.integers(min_value=-20, max_value=20))
def test_ipow_matches_integer_power(k):
    r = -0.7
    for e in range(12):
        assert ipow(r, e) == pytest.approx(r**e, rel=1e-14)
    with pytest.raises(ValueError):
        ipow(r, -1 - abs(k))


def test_j_at_left_endpoint_is_zero():
    m = ModelParams(3)
    assert j_function(m, -e_infinity(m)) == pytest.approx(0.0, abs=1e-15)


def test_j_at_minus_two_matches_high_precision():
    assert j_function(ModelParams(3), -2.0) == pytest.approx(j_mp(3, -2.0), abs=1e-12)
    assert j_function(ModelParams(3), -2.0) == pytest.approx(0.2075465, abs=1e-7)


def test_j_domain_error():
    with pytest.raises(ValueError):
        j_function(ModelParams(3), 0.0)


@given(ps, st.floats(min_value=1e-6, max_value=20.0))
def test_j_positive_below_threshold(p, gap):
    m = ModelParams(p)
    u = -e_infinity(m) - gap
    assert j_function(m, u) > 0
    assert j_function(m, u) == pytest.approx(j_mp(p, u), rel=1e-8, abs=1e-14)


def test_theta_flat_branch():
    assert theta(ModelParams(3), 0.5) == pytest.approx(0.5 * math.log(2), abs=1e-15)


@given(ps)
def test_theta_branch_continuity(p):
    m = ModelParams(p)
    e = e_infinity(m)
    base = 0.5 * math.log(p - 1)
    quad_at_e = base - (p - 2) / (4 * (p - 1)) * e * e
    assert abs(theta(m, -e) - quad_at_e) < 1e-12
    assert abs(theta(m, np.nextafter(-e, -np.inf)) - quad_at_e) < 1e-12
    assert abs(theta(m, 0.0) - base) < 1e-12
    assert abs(theta(m, -1e-300) - base) < 1e-12


def test_theta_branch_labels():
    m = ModelParams(3)
    assert theta_branch(m, -3) == "deep"
    assert theta_branch(m, -1) == "bulk"
    assert theta_branch(m, 0.0) == "flat"


@given(ps)
def test_theta_decreasing_beyond_threshold(p):
    m = ModelParams(p)
    E = np.linspace(e_infinity(m), 6, 2000)
    assert np.all(np.diff(theta(m, -E)) < 0)


def test_theta_vectorised_matches_scalar():
    m = ModelParams(5)
    us = np.linspace(-4, 2, 61)
    vec = theta(m, us)
    assert np.array_equal(vec, np.array([theta(m, u) for u in us]))


def test_e_zero_p3():
    rep = e_zero(ModelParams(3))
    assert rep.e_zero == pytest.approx(1.6570, abs=1e-4)
    assert abs(theta(ModelParams(3), -rep.e_zero)) <= 1e-10
    assert rep.bracket[0] <= rep.e_zero <= rep.bracket[1]


@given(ps)
def test_e_zero_exceeds_e_infinity(p):
    m = ModelParams(p)
    rep = e_zero(m)
    assert rep.e_zero > rep.e_inf
    assert abs(theta(m, -rep.e_zero)) <= rep.tol
    assert theta(m, -rep.e_inf) > 0


def test_e_zero_reproducible_across_brackets():
    m = ModelParams(32)
    a = e_zero(m, tol=1e-12).e_zero
    b = e_zero(m, tol=1e-12, e_hi=7.3).e_zero
    assert abs(a - b) < 1e-9


def test_e_zero_bad_tol():
    with pytest.raises(ValueError):
        e_zero(ModelParams(3), tol=0)


def test_omega_examples():
    assert omega_fn(0.0) == -0.5
    assert omega_fn(2.0) == pytest.approx(0.5, abs=1e-15)
    assert omega_fn(np.nextafter(2.0, 3.0)) == pytest.approx(0.5, abs=1e-12)
    assert omega_fn(3.0) == omega_fn(-3.0)


@given(st.floats(min_value=-10, max_value=10))
def test_omega_even(x):
    assert omega_fn(x) == omega_fn(-x)


def test_omega_slope_continuous_across_seam():
    # Omega'' ~ 1/sqrt(x - 2) just outside, so one-sided quotients close like sqrt(h)
    gaps = []
    for h in (1e-4, 1e-6, 1e-8):
        left = (omega_fn(2.0) - omega_fn(2 - h)) / h
        right = (omega_fn(2 + h) - omega_fn(2.0)) / h
        assert abs(right - left) < 2 * math.sqrt(h)
        gaps.append(abs(right - left))
    assert gaps[0] > gaps[1] > gaps[2]
    x = np.array([2 + 1e-3, 2.5, 4.0])
    s = np.sqrt(x * x / 4 - 1)
    fd = (omega_fn(x + 1e-7) - omega_fn(x - 1e-7)) / 2e-7
    assert np.allclose(fd, x / 2 - s, atol=1e-6)


@given(st.floats(min_value=-1.9, max_value=1.9))
def test_omega_second_derivative_inside(x):
    h = 1e-3
    d2 = (omega_fn(x + h) - 2 * omega_fn(x) + omega_fn(x - h)) / h**2
    assert d2 == pytest.approx(0.5, abs=1e-6)


@given(ps)
def test_h_poly_at_zero(p):
    m = ModelParams(p)
    assert h_poly(m, 0.0, 1) == p - 2
    assert h_poly(m, 0.0, -1) == p - 2


@given(ps, st.sampled_from([-1.0, 1.0]), st.sampled_from([1, -1]))
def test_h_poly_nonnegative_at_endpoints(p, r, sign):
    assert h_poly(ModelParams(p), r, sign) >= -1e-9


def test_h_poly_bad_sign():
    with pytest.raises(ValueError):
        h_poly(ModelParams(3), 0.1, 0)


@given(ps)
def test_sigma_u_eigenvalues_at_zero(p):
    lp, lm = sigma_u_eigenvalues(ModelParams(p), 0.0)
    assert lp == 1 and lm == 1


@given(ps, overlaps)
def test_sigma_u_eigenvalue_bounds(p, r):
    lp, lm = sigma_u_eigenvalues(ModelParams(p), r)
    bound = 2 * (p - 1) / p
    assert 0 < lp < bound and 0 < lm < bound


@given(ps, overlaps)
def test_concavity_and_hessian_agree(p, r):
    m = ModelParams(p)
    assert g_r_concavity_check(m, r)
    assert np.all(np.linalg.eigvalsh(g_r_hessian(m, r)) < 0)


def test_concavity_at_zero_closed_form():
    for p in (3, 4, 32):
        H = g_r_hessian(ModelParams(p), 0.0)
        assert np.allclose(H, -(p - 2) / (2 * (p - 1)) * np.eye(2), atol=1e-15)


def test_sigma_u_eigenvalues_domain():
    with pytest.raises(ValueError):
        sigma_u_eigenvalues(ModelParams(3), 1.0)
