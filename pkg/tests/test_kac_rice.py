import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import truncnorm

from pspinlab import covariance as cov
from pspinlab import kac_rice as kr
from pspinlab import landscape
from pspinlab.kac_rice import REAL_LINE, EnergyWindow, OverlapWindow, SecondMomentConfig
from pspinlab.rmt import (assemble_pair, corner_shift, energy_shift, mixing_weights, pair_blocks,
                          pair_noise)
from pspinlab.mc import substream
from pspinlab.scalar_theory import ModelParams


def lin(est):
    return math.exp(est.value)


@pytest.fixture(scope="module")
def census_n3():
    return landscape.census_batch(ModelParams(3, 3), 3000, 41)


def test_window_validation():
    with pytest.raises(ValueError):
        EnergyWindow(0.0, 0.0)
    with pytest.raises(ValueError):
        OverlapWindow(-1.2, 0.0)
    with pytest.raises(ValueError):
        OverlapWindow(0.3, 0.1)
    assert EnergyWindow.below(0.5).scaled(4) == (-math.inf, 1.0)
    assert kr.intersect(EnergyWindow(-1, 0), EnergyWindow(0, 1)) is None
    assert kr.intersect(EnergyWindow(-1, 0.5), EnergyWindow(0, 1)) == EnergyWindow(0, 0.5)


def test_first_moment_n2_closed_form():
    est = kr.first_moment(ModelParams(3, 2), REAL_LINE)
    assert est.stderr == 0.0
    assert lin(est) == pytest.approx(2 * math.sqrt(7), rel=1e-6)  # O(h^2) log-linear quadrature


def test_first_moment_empty_window():
    est = kr.first_moment(ModelParams(3, 4), None)
    assert est.value == -math.inf
    with pytest.raises(ValueError):
        kr.first_moment(ModelParams(3, 1), REAL_LINE)


@pytest.mark.parametrize("N,cut", [(2, 0.0), (2, -0.7), (5, 0.3)])
def test_first_moment_additivity(N, cut):
    params = ModelParams(3, N)
    model = kr.first_moment_model(params, seed=3)
    whole = lin(kr.first_moment(params, REAL_LINE, model=model))
    lo = lin(kr.first_moment(params, EnergyWindow.below(cut), model=model))
    hi = lin(kr.first_moment(params, EnergyWindow(cut, math.inf), model=model))
    assert lo + hi == pytest.approx(whole, rel=1e-10)


@given(st.floats(-3, 3), st.floats(0.05, 2), st.floats(0.05, 2))
def test_loglinear_integral_additive(a, d1, d2):
    x = np.linspace(-5, 5, 401)
    logf = -x * x / 2 + np.sin(3 * x)
    b, c = a + d1, a + d1 + d2
    left = kr.loglinear_integral(x, logf, a, b)
    right = kr.loglinear_integral(x, logf, b, c)
    assert np.logaddexp(left, right) == pytest.approx(kr.loglinear_integral(x, logf, a, c), abs=1e-12)


@pytest.mark.parametrize("window", [REAL_LINE, EnergyWindow.below(-0.5), EnergyWindow(-0.3, 0.8)])
def test_first_moment_mc_matches_exact_path(window):
    params = ModelParams(3, 3)
    exact = kr.first_moment(params, window, method="exact")
    mc = kr.first_moment(params, window, method="mc", n_samples=20000, seed=8)
    assert abs(mc.value - exact.value) < 3 * mc.stderr
    with pytest.raises(ValueError):
        kr.first_moment(ModelParams(3, 5), window, method="exact")


def test_first_moment_matches_census(census_n3):
    params = ModelParams(3, 3)
    for window in (REAL_LINE, EnergyWindow.below(0.0)):
        counts = np.array([landscape.count_crt(c, window) for c in census_n3])
        se = counts.std(ddof=1) / math.sqrt(counts.size)
        assert abs(counts.mean() - lin(kr.first_moment(params, window))) < 3 * se


@given(st.floats(0.001, 0.999), st.floats(-40, 40), st.floats(0.01, 10))
def test_truncnorm_ppf_matches_scipy(w, a, width):
    x = kr._truncnorm_ppf(np.array([w]), a, a + width)[0]
    assert a <= x <= a + width
    ref = truncnorm.ppf(w, a, a + width)
    if abs(a) < 8:
        assert x == pytest.approx(ref, abs=1e-9)


@given(st.integers(3, 9), st.floats(-0.95, 0.95), st.integers(0, 1000))
def test_corner_determinant_identity(N, r, seed):
    params = ModelParams(3, N)
    w = mixing_weights(params, r)
    rng = substream(seed, 0)
    noise = pair_noise(rng, 4, N)
    u1, u2 = rng.normal(size=4) * 3, rng.normal(size=4) * 3
    mats = assemble_pair(params, r, u1, u2, noise, w)
    corners = corner_shift(params, w, u1, u2)
    for y, m, u, c in zip(pair_blocks(params, noise, w), mats, (u1, u2), corners):
        got = kr._log_abs_det_corner(np.linalg.eigvalsh(y), np.linalg.eigvalsh(y[:, :-1, :-1]),
                                     (energy_shift(params) * u)[:, None], c[:, None])[:, 0]
        assert np.allclose(got, np.linalg.slogdet(m)[1], atol=1e-8)


def test_second_moment_needs_n3():
    with pytest.raises(ValueError):
        kr.second_moment(ModelParams(3, 2), REAL_LINE, OverlapWindow(-0.5, 0.5))
    with pytest.raises(ValueError):
        kr.second_moment_integrand(ModelParams(3, 4), REAL_LINE, [1.0])


def test_second_moment_empty_window():
    res = kr.second_moment(ModelParams(3, 4), None, OverlapWindow(-0.5, 0.5))
    assert res.estimate.value == -math.inf


def test_second_moment_deterministic():
    cfg = SecondMomentConfig(n_samples=300, seed=4)
    a = kr.second_moment(ModelParams(3, 4), EnergyWindow.below(0.2), OverlapWindow(-0.4, 0.6), cfg)
    b = kr.second_moment(ModelParams(3, 4), EnergyWindow.below(0.2), OverlapWindow(-0.4, 0.6), cfg)
    assert a.estimate.value == b.estimate.value
    assert np.array_equal(a.nodes, b.nodes)


def test_second_moment_matches_census_pairs(census_n3):
    params = ModelParams(3, 3)
    res = kr.second_moment(params, REAL_LINE, OverlapWindow(-1, 1), SecondMomentConfig(n_samples=2000))
    pairs = np.array([landscape.pair_count(c, REAL_LINE, OverlapWindow(-0.999999, 0.999999))
                      for c in census_n3])
    se_emp = pairs.std(ddof=1) / math.sqrt(pairs.size)
    est = lin(res.estimate)
    se = math.hypot(se_emp, est * res.estimate.stderr) + res.tail_bound
    assert abs(pairs.mean() - est) < 3 * se


def test_r0_integrand_factorizes():
    # at r = 0 with p >= 5 the two points decouple: the integrand is the density of
    # the overlap at 0 times the squared first moment
    params = ModelParams(5, 4)
    li, rel = kr.second_moment_integrand(params, REAL_LINE, [0.0], SecondMomentConfig(n_samples=3000))
    fm = kr.first_moment(params, REAL_LINE, n_samples=20000, seed=2)
    target = cov.log_omega(3) - cov.log_omega(4) + 2 * fm.value
    assert abs(li[0] - target) < 3 * math.hypot(rel[0], 2 * fm.stderr)


def test_second_moment_monotone_in_overlap_window():
    params = ModelParams(3, 4)
    cfg = SecondMomentConfig(n_samples=600, seed=1)
    narrow = kr.second_moment(params, REAL_LINE, OverlapWindow(-0.2, 0.3), cfg)
    wide = kr.second_moment(params, REAL_LINE, OverlapWindow(-0.6, 0.7), cfg)
    assert lin(wide.estimate) >= lin(narrow.estimate) * (1 - 3 * narrow.estimate.stderr)
    assert lin(wide.estimate) > lin(narrow.estimate)


def test_second_moment_even_p_symmetric():
    params = ModelParams(4, 4)
    cfg = SecondMomentConfig(n_samples=800, seed=6)
    a = kr.second_moment(params, EnergyWindow.below(0.1), OverlapWindow(0.1, 0.6), cfg)
    b = kr.second_moment(params, EnergyWindow.below(0.1), OverlapWindow(-0.6, -0.1), cfg)
    assert abs(a.estimate.value - b.estimate.value) < 3 * math.hypot(a.estimate.stderr, b.estimate.stderr)


def test_second_moment_odd_p_energy_flip():
    # H(-s) = -H(s): pairs with energies in B and in -B have the same overlap law
    params = ModelParams(3, 4)
    cfg = SecondMomentConfig(n_samples=800, seed=9)
    a = kr.second_moment(params, EnergyWindow.below(-0.2), OverlapWindow(-0.5, 0.5), cfg)
    b = kr.second_moment(params, EnergyWindow(0.2, math.inf), OverlapWindow(-0.5, 0.5), cfg)
    assert abs(a.estimate.value - b.estimate.value) < 3 * math.hypot(a.estimate.stderr, b.estimate.stderr)


def test_second_moment_reports_errors():
    res = kr.second_moment(ModelParams(3, 5), REAL_LINE, OverlapWindow(-1, 1),
                           SecondMomentConfig(n_samples=300))
    assert res.tail_bound >= 0 and res.quad_error >= 0
    assert res.nodes.shape[1] == 4 and np.all(np.abs(res.nodes[:, 0]) <= 0.999)
    assert np.all(res.nodes[:, 3] > 0)


@pytest.mark.parametrize("N,u", [(3, 0.0), (3, 1.0), (4, -0.5)])
def test_ratio_at_least_one(N, u):
    rep = kr.moment_ratio(ModelParams(3, N), u, SecondMomentConfig(n_samples=600))
    assert rep.ratio >= 1 - 3 * rep.ratio_stderr
    assert set(rep.error_budget) >= {"second_moment_rel", "first_moment_rel", "tail_bound_abs"}


def test_ratio_matches_census_second_moment(census_n3):
    params = ModelParams(3, 3)
    window = EnergyWindow.below(1.0)
    rep = kr.moment_ratio(params, 1.0, SecondMomentConfig(n_samples=2000))
    counts = np.array([landscape.count_crt(c, window) for c in census_n3], dtype=float)
    sq = counts * counts
    est = math.exp(rep.log_second_moment)
    se = math.hypot(sq.std(ddof=1) / math.sqrt(sq.size), est * rep.error_budget["second_moment_rel"])
    assert abs(sq.mean() - est) < 3 * se


def test_ratio_trend_decreasing():
    # finite-N trend only; the limit is asymptotic
    ratios = [kr.moment_ratio(ModelParams(3, N), 0.0).ratio for N in (4, 6, 8)]
    assert ratios[0] > ratios[1] > ratios[2]


def test_decomposition_partitions_total():
    params = ModelParams(3, 5)
    cfg = SecondMomentConfig(n_samples=500, seed=2)
    d = kr.overlap_decomposition(params, 0.3, C=1.5, rho=0.7, config=cfg)
    assert sum(b.share for b in d.bands) == pytest.approx(1.0, abs=1e-12)
    full = kr.second_moment(params, EnergyWindow.below(0.3), OverlapWindow(-1, 1), cfg)
    err = math.hypot(full.estimate.stderr, max(b.rel_stderr for b in d.bands))
    assert abs(d.log_total - full.estimate.value) < 3 * err + full.quad_error


def test_decomposition_small_band_dominates_large_p():
    d = kr.overlap_decomposition(ModelParams(32, 30), -1.0, config=SecondMomentConfig(n_samples=150))
    small = next(b for b in d.bands if b.name == "small")
    assert small.share > 0.9
    assert d.small_band_nodes.shape[1] == 4


def test_effective_b_is_cubic_or_flatter():
    params = ModelParams(3, 40)
    r = np.array([0.01, 0.02, 0.04])
    b = np.abs(kr.effective_b(params, r, -0.5, -0.5))
    slope = np.polyfit(np.log(r), np.log(b), 1)[0]
    assert slope >= 2.5
    assert kr.effective_b(params, 0.0, -0.5, -0.5) == pytest.approx(0.0, abs=1e-12)


def test_complexity_extrapolation_shape():
    a, vals = kr.complexity_extrapolation(3, 0.0, [10, 14, 18], n_samples=500)
    assert vals.shape == (3,) and math.isfinite(a)
