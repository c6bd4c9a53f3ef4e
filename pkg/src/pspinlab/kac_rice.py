"""Kac-Rice first and second moments of the critical-point count.

Energies are per-spin at the API; internally the Gaussian field value is
U = sqrt(N) * u.  All large quantities are carried in log scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import log_ndtr, logsumexp, ndtri, ndtri_exp

from . import covariance as cov
from .mc import MomentEstimate, map_chunks, substream
from .rmt import (corner_shift, energy_shift, expected_abs_det_small_n, goe_batch,
                  log_abs_det_shifted, mixing_weights, pair_blocks, pair_noise)
from .scalar_theory import ModelParams

LOG_2PI = math.log(2 * math.pi)


@dataclass(frozen=True)
class EnergyWindow:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty energy window ({self.lo}, {self.hi})")

    @staticmethod
    def below(u: float) -> "EnergyWindow":
        return EnergyWindow(-math.inf, u)

    def scaled(self, N: int) -> tuple[float, float]:
        s = math.sqrt(N)
        return self.lo * s, self.hi * s


REAL_LINE = EnergyWindow(-math.inf, math.inf)


@dataclass(frozen=True)
class OverlapWindow:
    lo: float
    hi: float

    def __post_init__(self):
        if not -1 <= self.lo < self.hi <= 1:
            raise ValueError(f"overlap window must satisfy -1 <= lo < hi <= 1, got ({self.lo}, {self.hi})")


def intersect(a: EnergyWindow | None, b: EnergyWindow | None) -> EnergyWindow | None:
    if a is None or b is None:
        return None
    lo, hi = max(a.lo, b.lo), min(a.hi, b.hi)
    return EnergyWindow(lo, hi) if lo < hi else None


# ---------------------------------------------------------------------------
# first moment


def _log_prefactor_first(params: ModelParams) -> float:
    N, p = params.N, params.p
    return cov.log_omega(N) + 0.5 * (N - 1) * math.log((p - 1) * (N - 1) / (2 * math.pi))


def _shift_coef(params: ModelParams) -> float:
    return math.sqrt(params.p / ((params.N - 1) * (params.p - 1)))


def _u_range(params: ModelParams) -> float:
    # |det| grows like |cU|^{N-1} against exp(-U^2/2): the mass sits near sqrt(N-1)
    return math.sqrt(params.N - 1) + 16.0


def loglinear_integral(x: np.ndarray, logf: np.ndarray, a: float, b: float) -> float:
    """log of the integral over [a, b] of exp(piecewise-linear interpolant of logf).

    Exactly additive over adjacent windows; outside [x[0], x[-1]] the
    integrand is treated as zero.
    """
    a, b = max(a, x[0]), min(b, x[-1])
    if not a < b:
        return -math.inf
    x0, x1 = x[:-1], x[1:]
    s = np.clip(np.maximum(x0, a), None, x1)
    t = np.clip(np.minimum(x1, b), x0, None)
    keep = t > s
    if not keep.any():
        return -math.inf
    x0, x1, s, t = x0[keep], x1[keep], s[keep], t[keep]
    l0, l1 = logf[:-1][keep], logf[1:][keep]
    slope = (l1 - l0) / (x1 - x0)
    ls = l0 + slope * (s - x0)
    d = slope * (t - s)
    # log((e^d - 1)/slope) handled stably for both signs and d ~ 0
    with np.errstate(divide="ignore", invalid="ignore"):
        small = np.abs(d) < 1e-8
        body = np.where(small, np.log(t - s) + d / 2,
                        np.where(d > 0, d + np.log(-np.expm1(-np.abs(d))),
                                 np.log(-np.expm1(-np.abs(d)))) - np.log(np.abs(slope)))
    terms = ls + body
    terms = terms[np.isfinite(terms)]
    return float(logsumexp(terms)) if terms.size else -math.inf


@dataclass
class FirstMomentModel:
    """log of phi(U) * D_{N-1}(c U) on a fixed fine grid, plus per-sample data for errors."""

    params: ModelParams
    method: str
    grid: np.ndarray
    log_integrand: np.ndarray
    seed: int = 0
    n_samples: int = 0
    coarse: np.ndarray | None = None
    sample_logs: np.ndarray | None = None  # (n_samples, len(coarse)) log|det| at coarse nodes

    def log_integral(self, ulo: float, uhi: float) -> float:
        return loglinear_integral(self.grid, self.log_integrand, ulo, uhi)

    def relative_stderr(self, ulo: float, uhi: float) -> float:
        if self.sample_logs is None:
            return 0.0
        x = self.coarse
        lo, hi = max(ulo, x[0]), min(uhi, x[-1])
        # trapezoid weights clipped to the window
        seg_lo, seg_hi = np.maximum(x[:-1], lo), np.minimum(x[1:], hi)
        seg = np.clip(seg_hi - seg_lo, 0, None)
        w = np.zeros_like(x)
        w[:-1] += seg / 2
        w[1:] += seg / 2
        if not (w > 0).any():
            return math.inf
        logw = np.where(w > 0, np.log(np.where(w > 0, w, 1)), -np.inf) - x * x / 2
        per = logsumexp(self.sample_logs + logw, axis=1)
        per = np.exp(per - per.max())
        return float(per.std(ddof=1) / per.mean() / math.sqrt(per.size))


def first_moment_model(params: ModelParams, method: str = "auto", n_samples: int = 4000,
                       seed: int = 0, h: float = 0.002, coarse_h: float = 0.05,
                       extend_to: tuple[float, float] | None = None) -> FirstMomentModel:
    N = params.N
    n = N - 1
    L = _u_range(params)
    lo, hi = -L, L
    if extend_to is not None:
        lo = min(lo, extend_to[0] - 8) if math.isfinite(extend_to[0]) else lo
        hi = max(hi, extend_to[1] + 8) if math.isfinite(extend_to[1]) else hi
    grid = np.arange(math.floor(lo / h), math.ceil(hi / h) + 1) * h
    c = _shift_coef(params)
    base = -grid * grid / 2 - 0.5 * LOG_2PI
    if method == "auto":
        method = "exact" if n <= 2 else "mc"
    if method == "exact":
        if n > 2:
            raise ValueError("exact inner expectation only for N - 1 <= 2")
        logd = np.log(expected_abs_det_small_n(n, c * grid, "paper_1overN"))
        return FirstMomentModel(params, "exact", grid, base + logd)
    if method != "mc":
        raise ValueError(method)
    coarse = np.arange(math.floor(lo / coarse_h), math.ceil(hi / coarse_h) + 1) * coarse_h

    def work(rng, size):
        eigs = np.linalg.eigvalsh(goe_batch(rng, size, n, "paper_1overN"))
        return log_abs_det_shifted(eigs, c * coarse)
    logs = np.concatenate(map_chunks(work, seed, 0, n_samples, 256))
    logd = logsumexp(logs, axis=0) - math.log(n_samples)
    spline = CubicSpline(coarse, logd)
    return FirstMomentModel(params, "mc", grid, base + spline(grid), seed, n_samples, coarse, logs)


def first_moment(params: ModelParams, window: EnergyWindow | None, method: str = "auto",
                 seed: int = 0, n_samples: int = 4000,
                 model: FirstMomentModel | None = None) -> MomentEstimate:
    """log E Crt_N(B); stderr is relative.  ``window=None`` is the empty set."""
    if params.N < 2:
        raise ValueError("N must be >= 2")
    if window is None:
        return MomentEstimate(-math.inf, 0.0, 0, seed, True)
    ulo, uhi = window.scaled(params.N)
    if model is None:
        model = first_moment_model(params, method, n_samples, seed, extend_to=(ulo, uhi))
    val = _log_prefactor_first(params) + model.log_integral(ulo, uhi)
    return MomentEstimate(val, model.relative_stderr(ulo, uhi), model.n_samples, model.seed, True)


def complexity_extrapolation(p: int, u: float, Ns, n_samples: int = 4000, seed: int = 0):
    """Fit (1/N) log E Crt_N((-inf, u)) = a + b log(N)/N + c/N; returns (a, values)."""
    Ns = np.asarray(list(Ns))
    vals = np.array([first_moment(ModelParams(p, int(N)), EnergyWindow.below(u),
                                  n_samples=n_samples, seed=seed + int(N)).value / N for N in Ns])
    X = np.column_stack([np.ones_like(Ns, dtype=float), np.log(Ns) / Ns, 1.0 / Ns])
    coef, *_ = np.linalg.lstsq(X, vals, rcond=None)
    return float(coef[0]), vals


# ---------------------------------------------------------------------------
# second moment


@dataclass(frozen=True)
class SecondMomentConfig:
    n_samples: int = 2000
    seed: int = 0
    r_max: float = 0.999
    order: int = 8
    max_panel: float | None = None  # default min(0.05, 0.5/sqrt(N))
    refine_tol: float = 1e-8
    chunk: int = 256
    u_strata: int = 8  # (U1, U2) draws per noise sample on a jittered u_strata^2 grid


@dataclass
class SecondMomentResult:
    estimate: MomentEstimate  # log of E[Crt_N(B, I_R)]_2, relative stderr
    nodes: np.ndarray  # columns r, weight, log integrand, relative stderr
    tail_bound: float  # absolute bound on the truncated |r| > r_max mass
    quad_error: float  # relative
    per_sample: np.ndarray = field(repr=False, default=None)  # integrated functional / shift
    log_shift: float = 0.0


def log_deterministic_factor(params: ModelParams, r):
    """log C_N + N log G(r) + log F(r)."""
    g = cov.g_factor(params, r)
    f = cov.f_factor(params, r)
    return cov.log_c_n(params) + params.N * np.log(g) + np.log(f)


def _panels(params, lo, hi, cfg: SecondMomentConfig):
    width = cfg.max_panel or min(0.05, 0.5 / math.sqrt(params.N))
    cuts = {lo, hi}
    for c in (0.0,):
        if lo < c < hi:
            cuts.add(c)
    cuts = sorted(cuts)
    edges = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        k = max(1, math.ceil((b - a) / width))
        edges.extend(np.linspace(a, b, k + 1)[:-1])
    edges.append(cuts[-1])
    x, w = np.polynomial.legendre.leggauss(cfg.order)

    def quad(a, b):
        r = (a + b) / 2 + (b - a) / 2 * x
        return r, (b - a) / 2 * w

    def panel_log(a, b):
        r, ww = quad(a, b)
        return float(logsumexp(log_deterministic_factor(params, r) + np.log(ww)))

    # refine where the deterministic factor is under-resolved
    stack = list(zip(edges[:-1], edges[1:]))
    final = []
    total = logsumexp([panel_log(a, b) for a, b in stack])
    while stack:
        a, b = stack.pop()
        whole = panel_log(a, b)
        m = (a + b) / 2
        halves = np.logaddexp(panel_log(a, m), panel_log(m, b))
        err = abs(math.exp(whole - total) - math.exp(halves - total))
        if err > cfg.refine_tol and b - a > 1e-6:
            stack.extend([(a, m), (m, b)])
        else:
            final.append((a, b))
    final.sort()
    rs, ws = zip(*(quad(a, b) for a, b in final))
    return np.concatenate(rs), np.concatenate(ws)


def _ghk_draw(sig: np.ndarray, ulo: float, uhi: float, w1, w2):
    """Sequential truncated-normal draw of (U1, U2) ~ N(0, sig) restricted to the box.

    Returns U1, U2 and the log of the box probability weight; the weighted
    draws give unbiased estimates of E[g(U); U in box].
    """
    s = math.sqrt(sig[0, 0])
    if not (math.isfinite(ulo) or math.isfinite(uhi)):
        z1 = ndtri(w1)
        u1 = s * z1
        cond_m = sig[0, 1] / sig[0, 0] * u1
        cond_s = math.sqrt(max(sig[1, 1] - sig[0, 1] ** 2 / sig[0, 0], 0.0))
        return u1, cond_m + cond_s * ndtri(w2), np.zeros_like(w1)
    a1, b1 = ulo / s, uhi / s
    logp1 = _log_interval_prob(a1, b1)
    u1 = s * _truncnorm_ppf(w1, a1, b1)
    cond_m = sig[0, 1] / sig[0, 0] * u1
    cond_s = math.sqrt(max(sig[1, 1] - sig[0, 1] ** 2 / sig[0, 0], 1e-300))
    a2, b2 = (ulo - cond_m) / cond_s, (uhi - cond_m) / cond_s
    logp2 = _log_interval_prob(a2, b2)
    u2 = cond_m + cond_s * _truncnorm_ppf(w2, a2, b2)
    return u1, u2, logp1 + logp2


def _log_interval_prob(a, b):
    """log(Phi(b) - Phi(a)), stable in both tails."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    # reflect so the interval lies mostly on the negative side
    flip = (a + b) > 0
    a2 = np.where(flip, -b, a)
    b2 = np.where(flip, -a, b)
    lb, la = log_ndtr(b2), log_ndtr(a2)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = lb + np.log1p(-np.exp(la - lb))
    return out


def _truncnorm_ppf(w, a, b):
    """Quantile of N(0, 1) restricted to [a, b], vectorised over all arguments."""
    w, a, b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (w, a, b)))
    # work on the side of the interval nearer the left tail so Phi keeps relative precision
    flip = (a + b) > 0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    q = np.where(flip, 1.0 - w, w)
    la, lb = log_ndtr(lo), log_ndtr(hi)
    # log(Phi(lo) + q (Phi(hi) - Phi(lo))) = lb + log(e^{la-lb} + q (1 - e^{la-lb}))
    with np.errstate(divide="ignore"):
        d = np.exp(la - lb)
        lt = lb + np.log(d + q * (1.0 - d))
    x = np.clip(ndtri_exp(lt), lo, hi)
    return np.where(flip, -x, x)


def _log_abs_det_corner(lam, mu, t, c):
    """log|det(Y - t I + c e e^T)| from the spectra of Y (lam) and its leading minor (mu).

    The determinant is affine in the corner entry:
    det(Y - tI) + c det(Y' - tI').  lam, mu have a trailing spectral axis;
    t and c broadcast against the leading axes.
    """
    dl = lam[:, None, :] - t[..., None]
    dm = mu[:, None, :] - t[..., None]
    with np.errstate(divide="ignore"):
        l1 = np.log(np.abs(dl)).sum(-1)
        l2 = np.log(np.abs(dm)).sum(-1) + np.log(np.abs(c))
    s1 = np.prod(np.sign(dl), -1)
    s2 = np.prod(np.sign(dm), -1) * np.sign(c)
    top = np.maximum(l1, l2)
    top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        return top + np.log(np.abs(s1 * np.exp(l1 - top) + s2 * np.exp(l2 - top)))


def _node_logs(params: ModelParams, rs: np.ndarray, ulo: float, uhi: float,
               cfg: SecondMomentConfig) -> np.ndarray:
    """Per-sample log of the inner functional at each r node, common noise across nodes.

    Each noise sample carries u_strata^2 stratified (U1, U2) draws whose
    average is the sample's estimate; stratification keeps it unbiased and
    removes most of the variance coming from the field values.
    """
    N = params.N
    G = int(cfg.u_strata)
    if G < 1:
        raise ValueError("u_strata must be >= 1")
    sigmas = [cov.sigma_u(params, r) for r in rs]
    weights = [mixing_weights(params, r) for r in rs]
    shift = energy_shift(params)
    cells = np.stack(np.meshgrid(np.arange(G), np.arange(G), indexing="ij"), -1).reshape(-1, 2)

    def work(rng, size):
        noise = pair_noise(rng, size, N)
        w = (cells[None] + rng.random((size, G * G, 2))) / G
        out = np.empty((size, rs.size))
        for k in range(rs.size):
            u1, u2, lw = _ghk_draw(sigmas[k], ulo, uhi, w[..., 0], w[..., 1])
            corners = corner_shift(params, weights[k], u1, u2)
            tot = lw
            for y, u, c in zip(pair_blocks(params, noise, weights[k]), (u1, u2), corners):
                lam = np.linalg.eigvalsh(y)
                mu = np.linalg.eigvalsh(y[:, :-1, :-1])
                tot = tot + _log_abs_det_corner(lam, mu, shift * u, c)
            out[:, k] = logsumexp(tot, axis=1) - math.log(G * G)
        return out

    return np.concatenate(map_chunks(work, cfg.seed, 7, cfg.n_samples, cfg.chunk))


def second_moment_integrand(params: ModelParams, window: EnergyWindow, rs,
                            config: SecondMomentConfig | None = None):
    """log integrand and its relative stderr at the given overlaps."""
    cfg = config or SecondMomentConfig()
    if params.N < 3:
        raise ValueError("second moment needs N >= 3")
    rs = np.atleast_1d(np.asarray(rs, dtype=float))
    if np.any(np.abs(rs) >= 1):
        raise ValueError("overlaps must lie in (-1, 1)")
    ulo, uhi = window.scaled(params.N)
    logs = _node_logs(params, rs, ulo, uhi, cfg)
    n = logs.shape[0]
    wl = np.exp(logs - logs.max(axis=0))
    rel = wl.std(axis=0, ddof=1) / wl.mean(axis=0) / math.sqrt(n)
    return log_deterministic_factor(params, rs) + logsumexp(logs, axis=0) - math.log(n), rel


def second_moment(params: ModelParams, window: EnergyWindow | None,
                  overlap_window: OverlapWindow, config: SecondMomentConfig | None = None
                  ) -> SecondMomentResult:
    """log E[Crt_N(B, I_R)]_2 by Gauss-Legendre panels in r and Monte Carlo inside.

    The same base noise (Hessian building blocks and the two uniforms that
    drive the (U1, U2) draw) is reused at every r-node, so the per-sample
    integrated functional gives an honest standard error for the integral.
    """
    cfg = config or SecondMomentConfig()
    N = params.N
    if N < 3:
        raise ValueError("second moment needs N >= 3")
    lo = max(overlap_window.lo, -cfg.r_max)
    hi = min(overlap_window.hi, cfg.r_max)
    empty = SecondMomentResult(MomentEstimate(-math.inf, 0.0, cfg.n_samples, cfg.seed, True),
                               np.zeros((0, 4)), 0.0, 0.0, np.zeros(cfg.n_samples), 0.0)
    if window is None or not lo < hi:
        return empty
    ulo, uhi = window.scaled(N)
    rs, ws = _panels(params, lo, hi, cfg)
    logdet = log_deterministic_factor(params, rs)
    logs = _node_logs(params, rs, ulo, uhi, cfg)
    n = logs.shape[0]
    node_log = logsumexp(logs, axis=0) - math.log(n)
    wl = np.exp(logs - logs.max(axis=0))
    node_rel = wl.std(axis=0, ddof=1) / wl.mean(axis=0) / math.sqrt(n)
    log_int = logdet + node_log  # log integrand at nodes
    terms = log_int + np.log(ws)
    total = float(logsumexp(terms))
    # per-sample integrated functional
    per_log = logsumexp(logs + (logdet + np.log(ws))[None, :], axis=1)
    shift = float(per_log.max())
    per = np.exp(per_log - shift)
    rel = float(per.std(ddof=1) / per.mean() / math.sqrt(n))

    # crude sup * length bound for |r| in (r_max, 1)
    tail = 0.0
    edge = 1.0 - cfg.r_max
    for side, inside in ((1, overlap_window.hi > cfg.r_max), (-1, overlap_window.lo < -cfg.r_max)):
        if inside:
            sel = side * rs > cfg.r_max - 0.02
            if sel.any():
                tail += float(np.exp(log_int[sel]).max()) * edge
    # quadrature error: compare against the Gauss rule of half the order on the same panels
    quad_err = _embedded_error(rs, ws, log_int, cfg.order)
    nodes = np.column_stack([rs, ws, log_int, node_rel])
    return SecondMomentResult(MomentEstimate(total, rel, n, cfg.seed, True), nodes, tail,
                              quad_err, per, shift)


def _embedded_error(rs, ws, log_int, order):
    """Relative change when each panel's integrand is replaced by its degree-(order/2) fit."""
    k = order
    npan = rs.size // k
    if npan == 0:
        return 0.0
    f = np.exp(log_int - log_int.max())
    full = (f * ws).sum()
    alt = 0.0
    for i in range(npan):
        sl = slice(i * k, (i + 1) * k)
        x = rs[sl]
        c = np.polynomial.legendre.legfit(x - x.mean(), f[sl], k // 2)
        alt += (np.polynomial.legendre.legval(x - x.mean(), c) * ws[sl]).sum()
    return float(abs(full - alt) / full) if full > 0 else 0.0


# ---------------------------------------------------------------------------
# ratio and decomposition


@dataclass
class MomentReport:
    log_first_moment: float
    log_second_moment: float  # log E[Crt^2], atoms included
    ratio: float
    ratio_stderr: float
    quadrature: dict
    error_budget: dict
    flags: list


def _antipodal_window(params: ModelParams, window: EnergyWindow | None) -> EnergyWindow | None:
    if window is None or params.p % 2 == 0:
        return window
    return intersect(window, EnergyWindow(-window.hi, -window.lo))


def moment_ratio(params: ModelParams, u: float, config: SecondMomentConfig | None = None,
                 first_samples: int = 4000) -> MomentReport:
    """E[Crt^2] / (E Crt)^2 for B = (-inf, u).

    E[Crt^2] = E[Crt(B, (-1, 1))]_2 + E Crt(B) + E Crt(B'), the last two being
    the pairs (s, s) and (s, -s); B' = B for even p and B with -B for odd p.
    """
    cfg = config or SecondMomentConfig()
    window = EnergyWindow.below(u)
    model = first_moment_model(params, "auto", first_samples, cfg.seed + 1,
                               extend_to=window.scaled(params.N))
    fm = first_moment(params, window, model=model)
    anti = first_moment(params, _antipodal_window(params, window), model=model)
    sm = second_moment(params, window, OverlapWindow(-1, 1), cfg)
    lin_sm = math.exp(sm.estimate.value) if math.isfinite(sm.estimate.value) else 0.0
    lin_fm = math.exp(fm.value)
    lin_anti = math.exp(anti.value) if math.isfinite(anti.value) else 0.0
    total = lin_sm + lin_fm + lin_anti
    ratio = total / lin_fm ** 2
    abs_total_err = math.sqrt((lin_sm * sm.estimate.stderr) ** 2
                              + (lin_fm * fm.stderr + lin_anti * anti.stderr) ** 2)
    rel = math.sqrt((abs_total_err / total) ** 2 + (2 * fm.stderr) ** 2)
    rel_sys = (sm.tail_bound + lin_sm * sm.quad_error) / total
    flags = []
    if rel > 0.5:
        flags.append("ratio uncertainty exceeds 50%")
    return MomentReport(
        log_first_moment=fm.value,
        log_second_moment=math.log(total),
        ratio=ratio,
        ratio_stderr=ratio * math.hypot(rel, rel_sys),
        quadrature={"r_nodes": int(sm.nodes.shape[0]), "order": cfg.order, "r_max": cfg.r_max,
                    "inner_samples": cfg.n_samples, "seed": cfg.seed,
                    "first_moment_method": model.method, "first_moment_samples": model.n_samples},
        error_budget={"second_moment_rel": sm.estimate.stderr, "first_moment_rel": fm.stderr,
                      "tail_bound_abs": sm.tail_bound, "quad_rel": sm.quad_error,
                      "atoms": {"diagonal": lin_fm, "antipodal": lin_anti}},
        flags=flags,
    )


def effective_b(params: ModelParams, r, u1: float, u2: float):
    """Diagnostic exponent B(r) at per-spin energies u1, u2.

    (1/N) log of the small-overlap integrand after removing sqrt(N/2pi)
    e^{-N r^2/2} and the determinant ratio; the constant prefactor ratio and
    the factor F(r) = 1 + O(r) are not N-th powers and are left out.
    """
    N = params.N
    r = np.atleast_1d(np.asarray(r, dtype=float))
    U1, U2 = math.sqrt(N) * u1, math.sqrt(N) * u2
    out = np.empty_like(r)
    for k, rk in enumerate(r):
        lphi = cov.log_density_phi_sigma_u(params, rk, U1, U2)
        lphi0 = -0.5 * (U1 * U1 + U2 * U2) - LOG_2PI
        out[k] = math.log(cov.g_factor(params, rk)) + rk * rk / 2 + (lphi - lphi0) / N
    return out if out.size > 1 else float(out[0])


@dataclass
class Band:
    name: str
    lo: float
    hi: float
    log_value: float
    rel_stderr: float
    share: float = 0.0


@dataclass
class Decomposition:
    bands: list
    log_total: float
    small_band_nodes: np.ndarray  # r, normalized integrand, Gaussian reference, effective B


def overlap_decomposition(params: ModelParams, u: float, C: float = 2.0, rho: float = 0.5,
                          config: SecondMomentConfig | None = None,
                          first_samples: int = 4000) -> Decomposition:
    """Split E[Crt(B, .)]_2 over |r| < C sqrt(log N / N), up to rho, and beyond."""
    cfg = config or SecondMomentConfig()
    N = params.N
    window = EnergyWindow.below(u)
    rs = C * math.sqrt(math.log(N) / N)
    rs = min(rs, cfg.r_max)
    rho = max(min(rho, cfg.r_max), rs)
    spec = [("small", [(-rs, rs)]), ("intermediate", [(-rho, -rs), (rs, rho)]),
            ("large", [(-1.0, -rho), (rho, 1.0)])]
    bands = []
    small_nodes = None
    for name, parts in spec:
        vals, errs = [], []
        for a, b in parts:
            if not a < b:
                continue
            res = second_moment(params, window, OverlapWindow(a, b), cfg)
            if math.isfinite(res.estimate.value):
                vals.append(res.estimate.value)
                errs.append(math.exp(res.estimate.value) * res.estimate.stderr)
            if name == "small":
                small_nodes = res
        lv = float(logsumexp(vals)) if vals else -math.inf
        re = math.sqrt(sum(e * e for e in errs)) / math.exp(lv) if vals else 0.0
        bands.append(Band(name, *(parts[0] if name == "small" else (rs, rho) if name == "intermediate"
                                  else (rho, 1.0)), lv, re))
    log_total = float(logsumexp([b.log_value for b in bands if math.isfinite(b.log_value)]))
    for b in bands:
        b.share = math.exp(b.log_value - log_total) if math.isfinite(b.log_value) else 0.0
    fm = first_moment(params, window, seed=cfg.seed + 1, n_samples=first_samples)
    nodes = np.zeros((0, 4))
    if small_nodes is not None and small_nodes.nodes.size:
        r = small_nodes.nodes[:, 0]
        norm = small_nodes.nodes[:, 2] - 2 * fm.value
        ref = 0.5 * math.log(N / (2 * math.pi)) - N * r * r / 2
        # B(r) is read at the window edge; it has no value for an unbounded window
        eff = effective_b(params, r, u, u) if math.isfinite(u) else np.full_like(r, math.nan)
        nodes = np.column_stack([r, norm, ref, np.atleast_1d(eff)])
    return Decomposition(bands, log_total, nodes)
