"""GOE sampling, determinant moments and the correlated Hessian-pair sampler.

Two GOE normalisations are in use and every public routine takes the tag
explicitly:

``paper_1overN``
    entry variances 1/n off the diagonal and 2/n on it (semicircle on [-2, 2]);
``sqrt2_support``
    the same matrix divided by sqrt(2) (semicircle on [-sqrt 2, sqrt 2]).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf, gammaln

from . import covariance as cov
from .mc import (MomentEstimate, log_mean_exp_estimate, map_chunks, mean_estimate,
                 ratio_estimate, substream)
from .scalar_theory import ModelParams

NORMALIZATIONS = ("paper_1overN", "sqrt2_support")


class CovarianceViolation(ArithmeticError):
    """A mixing weight Sigma_11 - |Sigma_12| came out negative."""


def _scale2(normalization: str) -> float:
    if normalization == "paper_1overN":
        return 1.0
    if normalization == "sqrt2_support":
        return 0.5
    raise ValueError(f"unknown normalization {normalization!r}; use one of {NORMALIZATIONS}")


@dataclass(frozen=True)
class GoeMatrix:
    n: int
    entries: np.ndarray
    normalization: str


@dataclass(frozen=True)
class HessianPair:
    m1: np.ndarray
    m2: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    b1: np.ndarray
    b2: np.ndarray


def sym_gauss(rng: np.random.Generator, size: int, dim: int, var_off: float) -> np.ndarray:
    """Batch of symmetric Gaussian matrices, variance var_off off-diagonal, 2*var_off on it."""
    a = rng.standard_normal((size, dim, dim))
    return (a + np.swapaxes(a, 1, 2)) * math.sqrt(var_off / 2.0)


def goe_batch(rng: np.random.Generator, size: int, n: int, normalization: str) -> np.ndarray:
    return sym_gauss(rng, size, n, _scale2(normalization) / n)


def sample_goe(n: int, normalization: str, seed: int) -> GoeMatrix:
    if n < 1:
        raise ValueError("n must be >= 1")
    m = goe_batch(substream(seed, 0), 1, n, normalization)[0]
    return GoeMatrix(n, m, normalization)


def log_abs_det_shifted(eigs: np.ndarray, x) -> np.ndarray:
    """log|det(G - x I)| from eigenvalues; eigs has shape (..., n), x broadcasts on the rest."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.log(np.abs(eigs[..., None] - x)).sum(axis=-2) if x.ndim else \
            np.log(np.abs(eigs - x)).sum(axis=-1)


def _folded_normal_mean(mu, sigma):
    mu = np.abs(np.asarray(mu, dtype=float))
    return (sigma * math.sqrt(2 / math.pi) * np.exp(-mu * mu / (2 * sigma * sigma))
            + mu * erf(mu / (sigma * math.sqrt(2))))


def expected_abs_det_small_n(n: int, x, normalization: str):
    """Exact E|det(G_n - x I)| for n in {1, 2}.

    n = 2 (paper_1overN): with s = trace/2 - x and R^2 ~ Exp(1) the squared
    eigenvalue half-gap, |det| = |s^2 - R^2| and averaging over R^2 first gives
    x^2 - 1/2 + sqrt(2) exp(-x^2/2).  Other normalisations follow by scaling.
    """
    c2 = _scale2(normalization)
    x = np.asarray(x, dtype=float)
    if n == 1:
        out = _folded_normal_mean(x, math.sqrt(2 * c2))
    elif n == 2:
        c = math.sqrt(c2)
        y = x / c
        out = c2 * (y * y - 0.5 + math.sqrt(2) * np.exp(-y * y / 2))
    else:
        raise ValueError("closed form available only for n <= 2")
    return out if out.ndim else float(out)


def _abs_det_logs(n, x, k, n_samples, seed, normalization, chunk=2048, stage=0):
    def work(rng, size):
        eigs = np.linalg.eigvalsh(goe_batch(rng, size, n, normalization))
        return k * log_abs_det_shifted(eigs, float(x))
    return np.concatenate(map_chunks(work, seed, stage, n_samples, chunk))


def mc_abs_det_moment(n: int, x: float, k: float, n_samples: int, seed: int,
                      normalization: str, log_scale: bool = False) -> MomentEstimate:
    """Monte Carlo E|det(G_n - x I)|^k, accumulated through log|det|."""
    if k <= 0:
        raise ValueError("k must be positive")
    if n_samples < 2:
        raise ValueError("need at least two samples")
    _scale2(normalization)
    est = log_mean_exp_estimate(_abs_det_logs(n, x, k, n_samples, seed, normalization), seed)
    if log_scale:
        return est
    v, se = est.linear()
    return MomentEstimate(v, se, n_samples, seed, False)


def det_moment_ratio(n: int, x: float, k: int, n_samples: int, seed: int,
                     normalization: str = "sqrt2_support") -> MomentEstimate:
    """log of E|det|^{2k} / (E|det|)^{2k}, both from the same samples.

    The stderr is from the delta method on the pair of sample means.
    """
    logs = _abs_det_logs(n, x, 1, n_samples, seed, normalization)
    shift = logs.max()
    w1 = np.exp(logs - shift)
    w2 = w1 ** (2 * k)
    m1, m2 = w1.mean(), w2.mean()
    val = math.log(m2) - 2 * k * math.log(m1)
    # gradient of log m2 - 2k log m1 w.r.t. (m1, m2)
    g = np.array([-2 * k / m1, 1 / m2])
    c = np.cov(np.vstack([w1, w2]))
    se = math.sqrt(max(float(g @ c @ g), 0.0) / n_samples)
    return MomentEstimate(val, se, n_samples, seed, True)


def mean_density_estimate(n: int, x: float, n_samples: int, seed: int,
                          bin_width: float = 0.02,
                          normalization: str = "sqrt2_support") -> MomentEstimate:
    """Histogram estimate of the mean eigenvalue density at x."""
    lo, hi = x - bin_width / 2, x + bin_width / 2

    def work(rng, size):
        eigs = np.linalg.eigvalsh(goe_batch(rng, size, n, normalization))
        return ((eigs >= lo) & (eigs < hi)).sum(axis=1) / (n * bin_width)
    return mean_estimate(np.concatenate(map_chunks(work, seed, 0, n_samples, 512)), seed)


def semicircle_density(x, normalization: str = "sqrt2_support"):
    r2 = 4.0 * _scale2(normalization)
    x = np.asarray(x, dtype=float)
    out = np.sqrt(np.maximum(r2 - x * x, 0.0)) * 2 / (math.pi * r2)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class Eq1Check:
    mc_det: MomentEstimate
    density: MomentEstimate
    formula: float
    ratio: float
    ratio_stderr: float


def det_density_identity_check(n: int, x: float, n_samples: int, seed: int,
                               bin_width: float = 0.02) -> Eq1Check:
    """Compare E|det(Y_n - x)| with its expression through the mean density.

    Y_n is sqrt2_support.  With N = n + 1,
        E|det(Y_n - x)| = sqrt2 Gamma(N/2) sqrt(N n) / n^{N/2} e^{n x^2/2} rho_N(x'),
    where rho_N is the mean density of an N x N sqrt2_support GOE and
    x' = x sqrt(n/N); the identity is exact at finite n only with that
    argument rescaling (the two sides differ by O(1/n) without it).
    """
    N = n + 1
    det = mc_abs_det_moment(n, x, 1, n_samples, seed, "sqrt2_support")
    rho = mean_density_estimate(N, x * math.sqrt(n / N), n_samples, seed + 1, bin_width)
    log_pref = (0.5 * math.log(2) + gammaln(N / 2) + 0.5 * math.log(N * n)
                - 0.5 * N * math.log(n) + 0.5 * n * x * x)
    formula = math.exp(log_pref) * rho.value
    ratio = det.value / formula
    rel = math.hypot(det.stderr / det.value, rho.stderr / rho.value)
    return Eq1Check(det, rho, formula, ratio, ratio * rel)


# ---------------------------------------------------------------------------
# correlated Hessian pair


@dataclass
class PairNoise:
    """Independent Gaussian building blocks, already at their target variances."""

    gbar: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    v: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    d: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    size: int = field(init=False)

    def __post_init__(self):
        self.size = self.v.shape[0]


def pair_noise(rng: np.random.Generator, size: int, N: int) -> PairNoise:
    m = N - 2
    var = 1.0 / (N - 1)
    gs = [sym_gauss(rng, size, m, var) for _ in range(3)]
    vs = [rng.standard_normal((size, m)) * math.sqrt(var) for _ in range(3)]
    ds = [rng.standard_normal(size) * math.sqrt(2 * var) for _ in range(3)]
    return PairNoise(*gs, *vs, *ds)


@dataclass(frozen=True)
class MixingWeights:
    g_own: float
    g_shared: tuple[float, float]
    z_own: float
    z_shared: tuple[float, float]
    q_own: float
    q_shared: tuple[float, float]
    m_coef: tuple[float, float]  # m1 = c0 U1 + c1 U2


def _split(s11, s12, denom, what, r, p):
    own = s11 - abs(s12)
    # the literal formulas cancel terms of size ~ (p(p-1))^2 / (1 - r^2)^2
    tol = 1e-12 * (p * (p - 1)) ** 2 / (1 - r * r) ** 2
    if own < -tol:
        raise CovarianceViolation(f"{what}: Sigma_11 - |Sigma_12| = {own:.3e} < 0 at r={r}")
    return math.sqrt(max(own, 0.0) / denom), math.sqrt(abs(s12) / denom), (1.0 if s12 >= 0 else -1.0)


def mixing_weights(params: ModelParams, r: float) -> MixingWeights:
    p = params.p
    pc = cov.pair_covariance(params, r)
    c = cov.coefficients(params, r)
    ar = abs(r) ** (p - 2)
    sgn_p = (1.0 if r >= 0 else -1.0) ** p
    zo, zs, zsg = _split(pc.sigma_z[0, 0], pc.sigma_z[0, 1], p * (p - 1), "Sigma_Z", r, p)
    qo, qs, qsg = _split(pc.sigma_q[0, 0], pc.sigma_q[0, 1], 2 * p * (p - 1), "Sigma_Q", r, p)
    mc = np.linalg.solve(pc.sigma_u, np.array([c.b3, c.b4]))
    return MixingWeights(
        g_own=math.sqrt(1 - ar), g_shared=(sgn_p * math.sqrt(ar), math.sqrt(ar)),
        z_own=zo, z_shared=(zsg * zs, zs),
        q_own=qo, q_shared=(qsg * qs, qs),
        m_coef=(float(mc[0]), float(mc[1])),
    )


def _block(g, v, d):
    size, m = v.shape
    out = np.empty((size, m + 1, m + 1))
    out[:, :m, :m] = g
    out[:, :m, m] = v
    out[:, m, :m] = v
    out[:, m, m] = d
    return out


def corner_shift(params: ModelParams, weights: MixingWeights, U1, U2):
    """Corner entries m_i / sqrt((N-1) p (p-1)) for both Hessians."""
    N, p = params.N, params.p
    corner = 1.0 / math.sqrt((N - 1) * p * (p - 1))
    c0, c1 = weights.m_coef
    return corner * (c0 * U1 + c1 * U2), corner * (c0 * U2 + c1 * U1)


def energy_shift(params: ModelParams) -> float:
    """Coefficient of U in the diagonal shift of each Hessian."""
    N, p = params.N, params.p
    return math.sqrt(p / ((N - 1) * (p - 1)))


def pair_blocks(params: ModelParams, noise: PairNoise, weights: MixingWeights):
    """The random parts Y_1, Y_2 of both Hessians (no energy shift, no corner)."""
    own = ((noise.g1, noise.v1, noise.d1), (noise.g2, noise.v2, noise.d2))
    w = weights
    return tuple(_block(w.g_own * g + w.g_shared[i] * noise.gbar,
                        w.z_own * v + w.z_shared[i] * noise.v,
                        w.q_own * d + w.q_shared[i] * noise.d)
                 for i, (g, v, d) in enumerate(own))


def assemble_pair(params: ModelParams, r: float, U1, U2, noise: PairNoise,
                  weights: MixingWeights | None = None, split: bool = False):
    """Both conditional Hessians (normalised) for field values U1, U2.

    U1, U2 are unit-variance field values (U = sqrt(N) * per-spin energy),
    scalars or arrays of length ``noise.size``.  Returns (M1, M2) or, with
    ``split``, (M1, M2, A1, A2) where A_i is the r = 0 GOE part minus the shift.
    """
    N = params.N
    w = mixing_weights(params, r) if weights is None else weights
    U1 = np.broadcast_to(np.asarray(U1, dtype=float), (noise.size,))
    U2 = np.broadcast_to(np.asarray(U2, dtype=float), (noise.size,))
    shift = energy_shift(params)
    corners = corner_shift(params, w, U1, U2)
    own = ((noise.g1, noise.v1, noise.d1), (noise.g2, noise.v2, noise.d2))
    eye = np.eye(N - 1)
    out_m, out_a = [], []
    for i, y in enumerate(pair_blocks(params, noise, w)):
        y = y.copy()
        y[:, -1, -1] += corners[i]
        s = (shift * (U1 if i == 0 else U2))[:, None, None] * eye
        out_m.append(y - s)
        if split:
            out_a.append(_block(*own[i]) - s)
    if split:
        return out_m[0], out_m[1], out_a[0], out_a[1]
    return out_m[0], out_m[1]


def _check_pair_args(params, r):
    if params.N < 3:
        raise ValueError("Hessian pair needs N >= 3")
    if not -1 < r < 1:
        raise ValueError("overlap must lie in (-1, 1)")


def sample_hessian_pair(params: ModelParams, r: float, u1: float, u2: float,
                        seed: int) -> HessianPair:
    """One draw of the pair at per-spin energies u1, u2 with its A/B split."""
    _check_pair_args(params, r)
    noise = pair_noise(substream(seed, 0), 1, params.N)
    sn = math.sqrt(params.N)
    m1, m2, a1, a2 = assemble_pair(params, r, sn * u1, sn * u2, noise, split=True)
    return HessianPair(m1[0], m2[0], a1[0], a2[0], m1[0] - a1[0], m2[0] - a2[0])


def sample_hessian_pairs(params: ModelParams, r: float, u1: float, u2: float,
                         n_samples: int, seed: int, split: bool = False):
    """Batched draws; same seed gives the same noise at every r."""
    _check_pair_args(params, r)
    w = mixing_weights(params, r)
    sn = math.sqrt(params.N)
    parts = map_chunks(lambda rng, size: assemble_pair(
        params, r, sn * u1, sn * u2, pair_noise(rng, size, params.N), w, split),
        seed, 1, n_samples, 1024)
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(len(parts[0])))


def _logabsdet(m):
    return np.linalg.slogdet(m)[1]


def shifted_goe_log_abs_det(N: int, x: float, n_samples: int, seed: int, stage: int):
    def work(rng, size):
        g = goe_batch(rng, size, N - 1, "paper_1overN")
        return _logabsdet(g - x * np.eye(N - 1))
    return np.concatenate(map_chunks(work, seed, stage, n_samples, 1024))


def delta_n_estimate(params: ModelParams, r: float, u1: float, u2: float,
                     n_samples: int, seed: int, method: str = "independent",
                     swap: bool = False) -> MomentEstimate:
    """Ratio of the correlated determinant product to the independent one.

    ``independent``: numerator from Hessian pairs and each denominator factor
    from its own stream (exact for N - 1 <= 2).  ``coupled``: the r = 0 part
    A_i of the same draws supplies the denominator, since A_1, A_2 are
    independent and E|det A_1 det A_2| is the product of the factors.
    Noise does not depend on r, so a fixed seed gives common random numbers
    across r.  ``swap`` multiplies the two determinants in reversed order.
    """
    _check_pair_args(params, r)
    N, p = params.N, params.p
    w = mixing_weights(params, r)
    sn = math.sqrt(N)

    def numer(rng, size):
        out = assemble_pair(params, r, sn * u1, sn * u2, pair_noise(rng, size, N), w,
                            split=(method == "coupled"))
        l1, l2 = _logabsdet(out[0]), _logabsdet(out[1])
        top = l2 + l1 if swap else l1 + l2
        if method == "coupled":
            return np.stack([top, _logabsdet(out[2]) + _logabsdet(out[3])])
        return top[None]

    if method not in ("independent", "coupled"):
        raise ValueError(method)
    logs = np.concatenate(map_chunks(numer, seed, 1, n_samples, 1024), axis=1)
    if method == "coupled":
        shift = max(logs[0].max(), logs[1].max())
        q, se = ratio_estimate(np.exp(logs[0] - shift), np.exp(logs[1] - shift))
        return MomentEstimate(q, se, n_samples, seed, False)

    num = log_mean_exp_estimate(logs[0], seed)
    shift = math.sqrt(N / (N - 1) * p / (p - 1))
    log_den, rel2 = 0.0, num.stderr ** 2
    for i, u in enumerate((u1, u2)):
        if N - 1 <= 2:
            log_den += math.log(expected_abs_det_small_n(N - 1, shift * u, "paper_1overN"))
        else:
            d = log_mean_exp_estimate(shifted_goe_log_abs_det(N, shift * u, n_samples, seed, 2 + i))
            log_den += d.value
            rel2 += d.stderr ** 2
    val = math.exp(num.value - log_den)
    return MomentEstimate(val, val * math.sqrt(rel2), n_samples, seed, False)


# ---------------------------------------------------------------------------
# overcrowding, perturbation inequality, perturbation size


def eigenvalue_counts(n: int, interval: tuple[float, float], n_samples: int, seed: int,
                      normalization: str = "paper_1overN") -> np.ndarray:
    lo, hi = interval
    if hi <= lo:
        return np.zeros(n_samples, dtype=int)

    def work(rng, size):
        eigs = np.linalg.eigvalsh(goe_batch(rng, size, n, normalization))
        return ((eigs >= lo) & (eigs <= hi)).sum(axis=1)
    return np.concatenate(map_chunks(work, seed, 0, n_samples, 1024))


@dataclass(frozen=True)
class OvercrowdingReport:
    n: int
    interval: tuple[float, float]
    t: float
    estimate: MomentEstimate
    bound: float

    @property
    def holds(self) -> bool:
        return self.estimate.value <= self.bound


def overcrowding_probability(n: int, interval: tuple[float, float], t: float,
                             n_samples: int, seed: int,
                             counts: np.ndarray | None = None) -> OvercrowdingReport:
    """P(GOE_n has at least t eigenvalues in the interval) next to 10 n |I| / t."""
    if t < 1:
        raise ValueError("t must be >= 1")
    lo, hi = map(float, interval)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError("interval must be finite")
    if counts is None:
        counts = eigenvalue_counts(n, (lo, hi), n_samples, seed)
    est = mean_estimate((counts >= t).astype(float), seed)
    length = max(hi - lo, 0.0)
    return OvercrowdingReport(n, (lo, hi), t, est, 10 * n * length / t)


@dataclass(frozen=True)
class PerturbationCheck:
    lhs: float
    rhs: float
    holds: bool
    rank: int


def det_perturbation_bound(c1: np.ndarray, c2: np.ndarray) -> PerturbationCheck:
    """|det(C1 + C2)| <= |det C1| prod_{j<=d} (1 + |lambda_max(C2)| / |lambda_j(C1)|).

    Eigenvalues of C1 are taken in increasing absolute value and d is the
    number of eigenvalues of C2 above 1e-12 times its spectral norm.
    """
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    e1 = np.linalg.eigvalsh(c1)
    a1 = np.sort(np.abs(e1))
    if a1[0] <= c1.shape[0] * np.finfo(float).eps * max(a1[-1], 1e-300):
        raise ValueError("C1 is singular")
    e2 = np.linalg.eigvalsh(c2)
    norm2 = float(np.abs(e2).max()) if e2.size else 0.0
    d = int((np.abs(e2) > 1e-12 * norm2).sum()) if norm2 > 0 else 0
    log_det1 = float(np.log(a1).sum())
    log_rhs = log_det1 + float(np.log1p(norm2 / a1[:d]).sum())
    log_lhs = float(np.log(np.abs(np.linalg.eigvalsh(c1 + c2))).sum())
    lhs, rhs = math.exp(log_lhs), math.exp(log_rhs)
    return PerturbationCheck(lhs, rhs, bool(log_lhs <= log_rhs + math.log1p(1e-9)), d)


def perturbation_instances(n_instances: int, seed: int, n_range: tuple[int, int] = (2, 12)) -> list:
    """Random (C1, C2) checks of the determinant perturbation inequality.

    C1 is a shifted GOE matrix; C2 has random rank d in [1, n] and a
    log-uniform scale in [1e-3, 10], so both tiny and dominating
    perturbations are exercised.
    """
    lo, hi = n_range

    def work(rng, size):
        out = []
        for _ in range(size):
            n = int(rng.integers(lo, hi + 1))
            c1 = goe_batch(rng, 1, n, "paper_1overN")[0] + rng.normal() * np.eye(n)
            d = int(rng.integers(1, n + 1))
            q, _ = np.linalg.qr(rng.standard_normal((n, d)))
            lam = rng.standard_normal(d) * 10 ** rng.uniform(-3, 1)
            out.append(det_perturbation_bound(c1, (q * lam) @ q.T))
        return out
    return [c for part in map_chunks(work, seed, 0, n_instances, 256) for c in part]


@dataclass(frozen=True)
class BNormStats:
    estimate: MomentEstimate  # mean of max_j |lambda_j(B^(1))|
    quantiles: dict
    exceed: tuple[MomentEstimate, MomentEstimate] | None
    threshold: float | None
    reference: float  # |r|^((p-3)/2)
    norms: np.ndarray  # (n_samples, 2)


def b_matrix_norm_stats(params: ModelParams, r: float, u1: float, u2: float,
                        n_samples: int, seed: int,
                        threshold: float | None = None) -> BNormStats:
    """Spectral norms of the perturbations B^(i) = M^(i) - A^(i)."""
    m1, m2, a1, a2 = sample_hessian_pairs(params, r, u1, u2, n_samples, seed, split=True)
    norms = np.stack([np.abs(np.linalg.eigvalsh(m1 - a1)).max(axis=1),
                      np.abs(np.linalg.eigvalsh(m2 - a2)).max(axis=1)], axis=1)
    qs = {q: float(np.quantile(norms[:, 0], q)) for q in (0.05, 0.25, 0.5, 0.75, 0.95)}
    exceed = None
    if threshold is not None:
        exceed = tuple(mean_estimate((norms[:, i] >= threshold).astype(float), seed)
                       for i in range(2))
    return BNormStats(mean_estimate(norms[:, 0], seed), qs, exceed, threshold,
                      abs(r) ** ((params.p - 3) / 2), norms)
