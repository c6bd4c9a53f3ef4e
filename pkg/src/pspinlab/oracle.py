"""Brute-force validator for the conditional Hessian law.

The unit-sphere field f has covariance k(x, y) = (x . y)^p.  For a kernel
of the form g(x . y), mixed directional derivatives have a closed form:

    D_{v_1..v_a}^x D_{w_1..w_b}^y g(x . y)
        = sum over partial matchings M between the v's and the w's of
          g^{(a+b-|M|)}(x . y) * prod_{(i,j) in M} v_i . w_j
                               * prod_{i unmatched} v_i . y
                               * prod_{j unmatched} w_j . x

so every entry of the joint law of (values, gradients, Hessians) at two
points is a finite sum of polynomial terms; no sampling and no finite
differences are involved.  The Riemannian Hessian of the restriction of a
degree-p form F to the unit sphere is  E^T (grad^2 F) E - p F(x) I.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import covariance as cov
from .scalar_theory import ModelParams


@dataclass(frozen=True)
class FrameConfig:
    n: int
    r: float
    point1: np.ndarray
    point2: np.ndarray
    frame1: np.ndarray  # rows are tangent vectors, last one along the geodesic
    frame2: np.ndarray
    orientation: str = "rotation"


@dataclass(frozen=True)
class JointGaussian:
    labels: list
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class ConditionalHessians:
    """Normalised conditional law of the two Hessians.

    ``mean`` has shape (2, n-1, n-1); ``cov[i, a, b, j, c, d]`` is the
    covariance of entry (a, b) of Hessian i with entry (c, d) of Hessian j.
    Both are divided by sqrt((n-1) p (p-1)) (resp. its square).
    """

    mean: np.ndarray
    cov: np.ndarray
    sigma_u: np.ndarray
    min_conditioning_eig: float


class SingularConditioning(ArithmeticError):
    pass


def build_frames(n: int, r: float, orientation: str = "rotation") -> FrameConfig:
    """Two unit vectors with overlap r and adapted orthonormal frames.

    The points live in the plane of the last two coordinate axes.  The first
    n-2 frame vectors are the remaining coordinate axes (shared by both
    points).  The geodesic vector is the rotation generator J x of that plane,
    so both geodesic vectors turn in the same direction ("rotation"); with
    "facing" the one at point2 is flipped to point back at point1.
    """
    if n < 3:
        raise ValueError("n must be at least 3")
    if not -1 < r < 1:
        raise ValueError("|r| must be < 1")
    if orientation not in ("rotation", "facing"):
        raise ValueError(orientation)
    a, b = n - 2, n - 1
    s = math.sqrt(1 - r * r)
    x1 = np.zeros(n)
    x1[a] = 1.0
    x2 = np.zeros(n)
    x2[a], x2[b] = r, s

    def rot(x):
        y = np.zeros(n)
        y[a], y[b] = -x[b], x[a]
        return y

    shared = np.eye(n)[: n - 2]
    g1, g2 = rot(x1), rot(x2)
    if orientation == "facing":
        g2 = -g2
    return FrameConfig(n, float(r), x1, x2,
                       np.vstack([shared, g1]), np.vstack([shared, g2]),
                       orientation)


def _gderiv(p: int, m: int, t: float) -> float:
    if m > p:
        return 0.0
    return math.factorial(p) / math.factorial(p - m) * t ** (p - m)


def kernel_derivative(p: int, x, vs, y, ws) -> float:
    """Cov(D_vs F(x), D_ws F(y)) for F with covariance (x . y)^p."""
    t = float(x @ y)
    a, b = len(vs), len(ws)
    total = 0.0
    for m in range(min(a, b) + 1):
        order = a + b - m
        gd = _gderiv(p, order, t)
        if gd == 0.0:
            continue
        for iv in itertools.combinations(range(a), m):
            for jw in itertools.permutations(range(b), m):
                term = gd
                for i, j in zip(iv, jw):
                    term *= vs[i] @ ws[j]
                for i in range(a):
                    if i not in iv:
                        term *= vs[i] @ y
                for j in range(b):
                    if j not in jw:
                        term *= ws[j] @ x
                total += term
    return total


def _observables(params: ModelParams, frames: FrameConfig):
    """Linear representation of values, gradients and Hessian entries.

    Each observable is (label, [(coef, point_index, directions), ...]).
    """
    p = params.p
    pts = (frames.point1, frames.point2)
    fr = (frames.frame1, frames.frame2)
    m = frames.n - 1
    obs = []
    for i in range(2):
        obs.append((("f", i), [(1.0, i, ())]))
    for i in range(2):
        for k in range(m):
            obs.append((("grad", i, k), [(1.0, i, (fr[i][k],))]))
    for i in range(2):
        for k in range(m):
            for l in range(m):
                terms = [(1.0, i, (fr[i][k], fr[i][l]))]
                if k == l:
                    terms.append((-float(p), i, ()))
                obs.append((("hess", i, k, l), terms))
    return obs, pts


def joint_covariance(params: ModelParams, frames: FrameConfig) -> JointGaussian:
    obs, pts = _observables(params, frames)
    n_obs = len(obs)
    c = np.zeros((n_obs, n_obs))
    for a in range(n_obs):
        for b in range(a, n_obs):
            s = 0.0
            for ca, ia, va in obs[a][1]:
                for cb, ib, vb in obs[b][1]:
                    s += ca * cb * kernel_derivative(params.p, pts[ia], va, pts[ib], vb)
            c[a, b] = c[b, a] = s
    return JointGaussian([o[0] for o in obs], np.zeros(n_obs), c)


def condition_hessians(params: ModelParams, frames: FrameConfig, u1: float,
                       u2: float, joint: JointGaussian | None = None) -> ConditionalHessians:
    """Schur-complement law of both Hessians given values u and zero gradients."""
    if joint is None:
        joint = joint_covariance(params, frames)
    m = frames.n - 1
    n_cond = 2 + 2 * m
    C = joint.cov
    cc = C[:n_cond, :n_cond]
    hc = C[n_cond:, :n_cond]
    hh = C[n_cond:, n_cond:]
    eig = np.linalg.eigvalsh(cc)
    if eig[0] <= 1e-12 * eig[-1]:
        raise SingularConditioning(f"conditioning block singular, min eigenvalue {eig[0]:.3e}")
    target = np.zeros(n_cond)
    target[:2] = u1, u2
    mean = hc @ np.linalg.solve(cc, target)
    ccov = hh - hc @ np.linalg.solve(cc, hc.T)
    scale = (frames.n - 1) * params.p * (params.p - 1)
    mean = mean.reshape(2, m, m) / math.sqrt(scale)
    ccov = ccov.reshape(2, m, m, 2, m, m) / scale
    # law of the values given zero gradients
    gg = C[2:n_cond, 2:n_cond]
    fg = C[:2, 2:n_cond]
    su = C[:2, :2] - fg @ np.linalg.solve(gg, fg.T)
    return ConditionalHessians(mean, ccov, su, float(eig[0]))


def model_hessian_law(params: ModelParams, n: int, r: float, u1: float,
                      u2: float) -> ConditionalHessians:
    """The same law assembled from the coefficient-table formulas."""
    p = params.p
    m = n - 1
    pc = cov.pair_covariance(params, r, u1, u2)
    scale = (n - 1) * p * (p - 1)
    shift = math.sqrt(p / ((n - 1) * (p - 1)))
    mean = np.zeros((2, m, m))
    for i, (u, mi) in enumerate(((u1, pc.m1), (u2, pc.m2))):
        mean[i] -= shift * u * np.eye(m)
        mean[i, m - 1, m - 1] += mi / math.sqrt(scale)
    c = np.zeros((2, m, m, 2, m, m))
    cross = r ** (p - 2)
    for i in range(2):
        for j in range(2):
            w = 1.0 if i == j else cross
            for a in range(m - 1):
                for b in range(m - 1):
                    var = (2.0 if a == b else 1.0) / (n - 1)
                    c[i, a, b, j, a, b] += w * var
                    if a != b:
                        c[i, a, b, j, b, a] += w * var
            for a in range(m - 1):
                z = pc.sigma_z[i, j] / scale
                c[i, a, m - 1, j, a, m - 1] = z
                c[i, m - 1, a, j, m - 1, a] = z
                c[i, a, m - 1, j, m - 1, a] = z
                c[i, m - 1, a, j, a, m - 1] = z
            c[i, m - 1, m - 1, j, m - 1, m - 1] = pc.sigma_q[i, j] / scale
    return ConditionalHessians(mean, c, pc.sigma_u, float("nan"))


def _entry_label(kind, idx):
    return kind + "[" + ",".join(str(int(v)) for v in idx) + "]"


def compare(params: ModelParams, n: int, r: float, u1: float, u2: float,
            orientation: str = "rotation", joint: JointGaussian | None = None):
    """Entrywise comparison rows (label, oracle, engine, abs diff)."""
    frames = build_frames(n, r, orientation)
    got = condition_hessians(params, frames, u1, u2, joint)
    want = model_hessian_law(params, n, r, u1, u2)
    rows = []
    for idx in np.ndindex(got.mean.shape):
        a, b = got.mean[idx], want.mean[idx]
        rows.append((_entry_label("mean", idx), a, b, abs(a - b)))
    for idx in np.ndindex(got.cov.shape):
        a, b = got.cov[idx], want.cov[idx]
        rows.append((_entry_label("cov", idx), a, b, abs(a - b)))
    for idx in np.ndindex(2, 2):
        a, b = got.sigma_u[idx], want.sigma_u[idx]
        rows.append((_entry_label("sigma_u", idx), a, b, abs(a - b)))
    return rows


def max_abs_diff(rows) -> float:
    return max(row[3] for row in rows)


def orientation_diagnostic(params: ModelParams, n: int, r: float, u1: float = 0.0,
                           u2: float = 0.0) -> dict:
    """Max mismatch under both geodesic orientations.

    The two frames differ by conjugating the second Hessian with
    diag(1, ..., 1, -1), which flips the sign of the Z cross-covariance only.
    """
    return {o: max_abs_diff(compare(params, n, r, u1, u2, o))
            for o in ("rotation", "facing")}


# ---------------------------------------------------------------------------
# finite-difference cross-check

def _feature(x: np.ndarray, p: int) -> np.ndarray:
    # (x . y)^p = <x^{(x)p}, y^{(x)p}>
    out = x
    for _ in range(p - 1):
        out = np.multiply.outer(out, x).ravel()
    return out


def _fd_directional(x: np.ndarray, dirs: tuple, p: int, h: float) -> np.ndarray:
    if len(dirs) == 0:
        return _feature(x, p)
    if len(dirs) == 1:
        (v,) = dirs
        return (_feature(x + h * v, p) - _feature(x - h * v, p)) / (2 * h)
    if len(dirs) == 2:
        v, w = dirs
        return (_feature(x + h * v + h * w, p) - _feature(x + h * v - h * w, p)
                - _feature(x - h * v + h * w, p) + _feature(x - h * v - h * w, p)) / (4 * h * h)
    raise ValueError("at most two directions")


def fd_joint_covariance(params: ModelParams, frames: FrameConfig, h: float = 1e-4) -> JointGaussian:
    """Joint covariance from central differences of the tensor feature map.

    Only derivatives of order <= 2 at a single point are differenced, so the
    error is O(h^2) plus O(eps / h^2).
    """
    p = params.p
    if frames.n ** p > 2_000_000:
        raise ValueError("feature map too large for the finite-difference check")
    obs, pts = _observables(params, frames)
    feats = np.stack([sum(c * _fd_directional(pts[i], d, p, h) for c, i, d in terms)
                      for _, terms in obs])
    return JointGaussian([o[0] for o in obs], np.zeros(len(obs)), feats @ feats.T)


def fd_cross_check(params: ModelParams, n: int, r: float, u1: float, u2: float,
                   h: float = 1e-4, orientation: str = "rotation") -> float:
    """Max entrywise gap between the symbolic and finite-difference conditional laws."""
    frames = build_frames(n, r, orientation)
    exact = condition_hessians(params, frames, u1, u2)
    fd = condition_hessians(params, frames, u1, u2, fd_joint_covariance(params, frames, h))
    return float(max(np.abs(exact.mean - fd.mean).max(), np.abs(exact.cov - fd.cov).max(),
                     np.abs(exact.sigma_u - fd.sigma_u).max()))
