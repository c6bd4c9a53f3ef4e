import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pspinlab import landscape as ls
from pspinlab.kac_rice import REAL_LINE, EnergyWindow, OverlapWindow
from pspinlab.mc import substream
from pspinlab.scalar_theory import ModelParams, e_infinity


def on_sphere(rng, N):
    x = rng.standard_normal(N)
    return math.sqrt(N) * x / np.linalg.norm(x)


def pair_at_overlap(rng, N, R):
    a = on_sphere(rng, N) / math.sqrt(N)
    b = rng.standard_normal(N)
    b -= (b @ a) * a
    b /= np.linalg.norm(b)
    return math.sqrt(N) * a, math.sqrt(N) * (R * a + math.sqrt(1 - R * R) * b)


@pytest.fixture(scope="module")
def censuses_n3():
    return ls.census_batch(ModelParams(3, 3), 60, 5)


def test_budget_guard():
    with pytest.raises(ls.BudgetError):
        ls.sample_couplings(ModelParams(3, 13), 0)
    assert ls.sample_couplings(ModelParams(3, 13), 0, max_n=13).N == 13


def test_monomial_layout_multiplicities():
    monos, mult, flat = ls.monomial_layout(4, 3)
    assert monos.shape == (math.comb(6, 3), 3)
    assert mult.sum() == 4 ** 3
    assert np.bincount(flat).tolist() == mult.astype(int).tolist()


@pytest.mark.parametrize("R", [-0.6, 0.0, 0.5, 0.9])
def test_coupling_covariance(R):
    N, p, k = 6, 3, 20000
    rng = substream(3, 0)
    s, t = pair_at_overlap(rng, N, R)
    hs, ht = np.empty(k), np.empty(k)
    for i in range(k):
        tensor = ls.sample_couplings(ModelParams(p, N), 0, rng=rng)
        hs[i] = ls.evaluate(tensor, s)[0]
        ht[i] = ls.evaluate(tensor, t)[0]
    prod = hs * ht
    se = prod.std(ddof=1) / math.sqrt(k)
    assert abs(prod.mean() - N * R ** p) < 3 * se
    assert abs(hs.var() - N) < 3 * N * math.sqrt(2 / k)


@given(st.integers(2, 6), st.integers(2, 5), st.integers(0, 10 ** 6))
def test_homogeneity_and_euler(N, p, seed):
    rng = substream(seed, 2)
    tensor = ls.sample_couplings(ModelParams(p, N), 0, rng=rng)
    s = on_sphere(rng, N)
    h, g, H = ls.evaluate(tensor, s)
    assert ls.evaluate(tensor, -s)[0] == pytest.approx((-1) ** p * h, abs=1e-12 * (1 + abs(h)))
    assert s @ g == pytest.approx(p * h, rel=1e-9, abs=1e-12)
    assert np.array_equal(H, H.T)


def test_gradient_hessian_fd():
    rng = substream(4, 0)
    tensor = ls.sample_couplings(ModelParams(4, 5), 0, rng=rng)
    s = on_sphere(rng, 5)
    _, g, H = ls.evaluate(tensor, s)
    h = 1e-5
    fd_g = np.array([(ls.evaluate(tensor, s + h * e)[0] - ls.evaluate(tensor, s - h * e)[0]) / (2 * h)
                     for e in np.eye(5)])
    fd_H = np.array([(ls.evaluate(tensor, s + h * e)[1] - ls.evaluate(tensor, s - h * e)[1]) / (2 * h)
                     for e in np.eye(5)])
    assert np.linalg.norm(fd_g - g) / np.linalg.norm(g) < 1e-6
    assert np.linalg.norm(fd_H - H) / np.linalg.norm(H) < 1e-6


def test_riemannian_hessian_basis_invariant():
    rng = substream(6, 0)
    tensor = ls.sample_couplings(ModelParams(3, 6), 0, rng=rng)
    s = on_sphere(rng, 6)
    _, h1 = ls.spherical_grad_hess(tensor, s)
    E = ls.tangent_basis(s)
    Q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    _, h2 = ls.spherical_grad_hess(tensor, s, basis=E @ Q)
    assert np.allclose(np.linalg.eigvalsh(h1), np.linalg.eigvalsh(h2), atol=1e-9)


def test_riemannian_hessian_geodesic_fd():
    # at a critical point the second derivative along a great circle is the quadratic form
    tensor = ls.sample_couplings(ModelParams(3, 3), 0, rng=substream(5, 0, 0))
    census = ls.enumerate_critical_points(tensor)
    rec = census.points[0]
    s = rec.sigma
    N = s.size
    E = ls.tangent_basis(s)
    _, rh = ls.spherical_grad_hess(tensor, s, basis=E)
    h = 1e-4
    for v in (E[:, 0], (E[:, 0] + E[:, 1]) / math.sqrt(2)):
        c = np.linalg.lstsq(E, v, rcond=None)[0]
        f = [ls.evaluate(tensor, math.cos(a) * s + math.sqrt(N) * math.sin(a) * v)[0] for a in (-h, 0, h)]
        second = (f[0] - 2 * f[1] + f[2]) / (h * h) / N
        assert second == pytest.approx(c @ rh @ c, abs=1e-6 * (1 + abs(second)))


def test_n2_census_exact_and_bounded():
    for k in range(200):
        tensor = ls.sample_couplings(ModelParams(3, 2), 0, rng=substream(7, k))
        c = ls.enumerate_critical_points(tensor)
        n = len(c.points)
        assert c.complete and c.certificate == "exact"
        assert n in (2, 4, 6) and n <= 2 * 3
        for r in c.points:
            rg, _ = ls.spherical_grad_hess(tensor, r.sigma)
            assert np.linalg.norm(rg) < 1e-10
            assert np.linalg.norm(r.sigma) == pytest.approx(math.sqrt(2), abs=1e-10)


def test_n2_census_high_degree():
    tensor = ls.sample_couplings(ModelParams(9, 2), 0, rng=substream(8, 0))
    c = ls.enumerate_critical_points(tensor)
    assert len(c.points) <= 18 and c.morse_sum == 0


def test_n2_mean_count_matches_closed_form():
    counts = [len(c.points) for c in ls.census_batch(ModelParams(3, 2), 3000, 12)]
    se = np.std(counts, ddof=1) / math.sqrt(len(counts))
    assert abs(np.mean(counts) - 2 * math.sqrt(7)) < 3 * se


def test_census_invariants(censuses_n3):
    for c in censuses_n3:
        assert c.complete
        assert c.morse_sum == 2 and len(c.points) % 2 == 0
        S = c.sigmas
        for r in c.points:
            assert 0 <= r.index <= c.N - 1 and r.grad_norm < 1e-9
            assert np.linalg.norm(r.sigma) == pytest.approx(math.sqrt(3), abs=1e-10)
            j = np.argmin(np.linalg.norm(S + r.sigma, axis=1))
            anti = c.points[j]
            assert np.allclose(anti.sigma, -r.sigma, atol=1e-8)
            assert anti.energy == pytest.approx(-r.energy, abs=1e-10)
        d = np.linalg.norm(S[:, None] - S[None], axis=2) + np.eye(len(S)) * 10
        assert d.min() > c.dedup_tol


def test_verify_census_recomputes(censuses_n3):
    # census_batch draws trial k's couplings from substream (seed, k, 0)
    tensor = ls.sample_couplings(ModelParams(3, 3), 0, rng=substream(5, 0, 0))
    check = ls.verify_census(tensor, censuses_n3[0])
    assert check["max_grad_norm"] < 1e-9 * math.sqrt(3) ** 2
    assert check["index_mismatch"] == 0 and check["unstable_index"] == 0


def test_even_p_antipodal_index():
    tensor = ls.sample_couplings(ModelParams(4, 3), 0, rng=substream(9, 0))
    c = ls.enumerate_critical_points(tensor)
    assert c.complete and c.morse_sum == 2
    S = c.sigmas
    for r in c.points:
        j = np.argmin(np.linalg.norm(S + r.sigma, axis=1))
        assert c.points[j].index == r.index
        assert c.points[j].energy == pytest.approx(r.energy, abs=1e-10)


def test_homotopy_matches_multistart():
    tensor = ls.sample_couplings(ModelParams(3, 4), 0, rng=substream(10, 0))
    a = ls.enumerate_critical_points(tensor, "homotopy", seed=1)
    b = ls.enumerate_critical_points(tensor, "multistart", seed=1)
    assert a.complete and a.certificate == "homotopy" and a.morse_sum == 0
    assert np.allclose(np.sort(a.energies), np.sort(b.energies), atol=1e-9)


def test_method_validation():
    t2 = ls.sample_couplings(ModelParams(3, 2), 0)
    t3 = ls.sample_couplings(ModelParams(3, 3), 0)
    with pytest.raises(ValueError):
        ls.enumerate_critical_points(t3, "angle")
    with pytest.raises(ValueError):
        ls.enumerate_critical_points(t2, "bogus")


def test_pair_count_identities(censuses_n3):
    for c in censuses_n3[:20]:
        for w in (REAL_LINE, EnergyWindow.below(0.0)):
            n = ls.count_crt(c, w)
            assert ls.pair_count(c, w, OverlapWindow(-1, 1)) == n * n
            parts = [OverlapWindow(-1, -0.3), OverlapWindow(-0.3, 0.4), OverlapWindow(0.4, 1)]
            assert sum(ls.pair_count(c, w, o) for o in parts) == n * n
        # open interior excludes the diagonal and the antipodes
        n = len(c.points)
        assert ls.pair_count(c, REAL_LINE, OverlapWindow(-0.9999999, 0.9999999)) == n * (n - 2)


def test_empirical_concentration(censuses_n3):
    res = ls.empirical_concentration(ModelParams(3, 3), math.inf, 0, 0, censuses=censuses_n3)
    assert res.n_trials == 60 and res.n_incomplete == 0
    assert res.ratio >= 1 - (res.ratio_ci[1] - res.ratio_ci[0])
    assert res.ratio_ci[0] <= res.ratio <= res.ratio_ci[1] + 1e-12


def test_census_batch_deterministic():
    a = ls.census_batch(ModelParams(3, 3), 4, 21, threads=1)
    b = ls.census_batch(ModelParams(3, 3), 4, 21, threads=2)
    for x, y in zip(a, b):
        assert np.array_equal(x.energies, y.energies)


def test_minima_above_threshold_thin_out_with_n():
    # trend only: at these N most minima still sit above -E_inf + eps
    eps = 0.5
    fracs = []
    for N in (3, 4, 5):
        cs = ls.census_batch(ModelParams(3, N), 300, 3)
        minima = np.concatenate([c.energies[c.indices == 0] for c in cs])
        fracs.append(np.mean(minima > -e_infinity(ModelParams(3, N)) + eps))
    assert fracs[0] > fracs[1] > fracs[2]


def test_export_roundtrip(censuses_n3):
    c = censuses_n3[0]
    j = ls.census_from_json(ls.census_to_json(c))
    assert j.complete == c.complete and j.morse_sum == c.morse_sum
    assert np.array_equal(j.energies, c.energies) and np.array_equal(j.sigmas, c.sigmas)
    v = ls.census_from_csv(ls.census_to_csv(c), 3)
    assert np.array_equal(v.energies, c.energies) and np.array_equal(v.indices, c.indices)
    assert np.array_equal(v.sigmas, c.sigmas) and v.morse_sum == c.morse_sum
