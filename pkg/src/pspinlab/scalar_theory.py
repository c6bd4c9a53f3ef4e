"""Closed-form scalar functions of the spherical pure p-spin landscape.

Complexity function, its energy thresholds, and the inequality family
(``omega_fn``, ``h_poly``, the eigenvalues of the conditional energy
covariance) that controls concavity of the two-point exponent ``g_r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ModelParams:
    """Spin-interaction degree ``p`` and ambient dimension ``N``."""

    p: int
    N: int = 2

    def __post_init__(self):
        if int(self.p) != self.p or int(self.N) != self.N:
            raise ValueError("p and N must be integers")
        if self.p < 2:
            raise ValueError(f"p must be >= 2, got {self.p}")
        if self.N < 2:
            raise ValueError(f"N must be >= 2, got {self.N}")


@dataclass(frozen=True)
class ThresholdReport:
    e_inf: float
    e_zero: float
    bracket: tuple[float, float]
    tol: float


def ipow(r, k: int):
    """``r**k`` for integer ``k >= 0`` that is safe for negative ``r``.

    Works on scalars and arrays; the sign is carried explicitly so that odd
    powers of negative overlaps never go through a fractional-power path.
    """
    if k < 0:
        raise ValueError("negative exponent")
    r = np.asarray(r, dtype=float)
    mag = np.abs(r) ** k
    if k % 2:
        mag = np.sign(r) * mag
    return mag if mag.ndim else float(mag)


def e_infinity(params: ModelParams) -> float:
    p = params.p
    return 2.0 * math.sqrt((p - 1) / p)


def j_function(params: ModelParams, u):
    """Large-deviation correction J(u), defined for ``u <= -E_inf``."""
    e = e_infinity(params)
    u = np.asarray(u, dtype=float)
    # tolerate rounding at the left endpoint of the domain
    if np.any(u > -e * (1 - 1e-14)):
        raise ValueError(f"J(u) requires u <= -E_inf = {-e}")
    s = np.sqrt(np.maximum(u * u - e * e, 0.0))
    out = -(u / (e * e)) * s - np.log(-u + s) + math.log(e)
    return out if out.ndim else float(out)


def theta(params: ModelParams, u):
    """Annealed complexity Theta_p(u) (three-branch form)."""
    p = params.p
    e = e_infinity(params)
    u_arr = np.atleast_1d(np.asarray(u, dtype=float))
    base = 0.5 * math.log(p - 1)
    quad = base - (p - 2) / (4 * (p - 1)) * u_arr**2
    out = np.where(u_arr >= 0, base, quad)
    low = u_arr < -e
    if np.any(low):
        out[low] = quad[low] - j_function(params, u_arr[low])
    if np.ndim(u) == 0:
        return float(out[0])
    return out


def theta_branch(params: ModelParams, u: float) -> str:
    e = e_infinity(params)
    if u < -e:
        return "deep"
    if u < 0:
        return "bulk"
    return "flat"


def e_zero(params: ModelParams, tol: float = 1e-10, e_hi: float | None = None,
           max_doublings: int = 60) -> ThresholdReport:
    """Ground-state threshold E_0: the zero of E -> Theta_p(-E) beyond E_inf.

    The upper bracket starts at ``2 * E_inf`` (or ``e_hi``) and doubles until
    Theta changes sign, then plain bisection runs until ``|Theta| <= tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    e_inf = e_infinity(params)
    lo = e_inf
    hi = 2.0 * e_inf if e_hi is None else float(e_hi)
    f = lambda e: theta(params, -e)  # noqa: E731
    if f(lo) <= 0:
        raise ArithmeticError("Theta_p(-E_inf) is not positive")
    n = 0
    while f(hi) >= 0:
        lo, hi = hi, 2 * hi
        n += 1
        if n > max_doublings:
            raise ArithmeticError("no sign change of Theta_p(-E) found")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = f(mid)
        # a quarter of tol keeps repeated bracketings consistent
        if abs(val) <= 0.25 * tol:
            break
        if val > 0:
            lo = mid
        else:
            hi = mid
    if abs(f(mid)) > tol:
        raise ArithmeticError(f"bisection stalled at |Theta|={abs(f(mid))}")
    return ThresholdReport(e_inf=e_inf, e_zero=mid, bracket=(lo, hi), tol=tol)


def omega_fn(x):
    """Two-branch Omega(x) (log-determinant rate of a shifted semicircle)."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    inner = x * x / 4 - 0.5
    s = np.sqrt(np.maximum(x * x / 4 - 1, 0.0))
    # clamp keeps the unused branch finite for |x| < 2
    outer = inner - ax / 2 * s + np.log(s + np.maximum(ax, 2.0) / 2)
    out = np.where(ax <= 2, inner, outer)
    return out if out.ndim else float(out)


def h_poly(params: ModelParams, r, sign: int):
    """p-2 + p r^{2p-2} +/- (p-2)(p-1) r^{p-2} -/+ (p-1) p r^p."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    p = params.p
    return (p - 2 + p * ipow(r, 2 * p - 2)
            + sign * (p - 2) * (p - 1) * ipow(r, p - 2)
            - sign * (p - 1) * p * ipow(r, p))


def sigma_u_eigenvalues(params: ModelParams, r):
    """Both eigenvalues Sigma_U,11 +/- Sigma_U,12 via the quotient formula."""
    p = params.p
    r = np.asarray(r, dtype=float)
    if np.any(np.abs(r) >= 1):
        raise ValueError("overlap must lie in (-1, 1)")
    a = 1 - ipow(r, 2 * p - 2)
    b = (p - 1) * ipow(r, p - 2) * (1 - r * r)
    c = p * ipow(r, p) - (p - 1) * ipow(r, p - 2)
    plus = (a + b) / (1 - c)
    minus = (a - b) / (1 + c)
    return plus, minus


def g_r_hessian(params: ModelParams, r: float) -> np.ndarray:
    """Hessian of g_r on the bulk square: -Sigma_U^{-1} + p/(2(p-1)) I."""
    lp, lm = sigma_u_eigenvalues(params, r)
    s11, s12 = (lp + lm) / 2, (lp - lm) / 2
    inv = np.linalg.inv(np.array([[s11, s12], [s12, s11]]))
    return -inv + params.p / (2 * (params.p - 1)) * np.eye(2)


def g_r_concavity_check(params: ModelParams, r):
    """True where g_r is strictly concave on (-E_inf, E_inf)^2.

    The Hessian shares eigenvectors (1, +/-1) with Sigma_U, so its
    eigenvalues are ``-1/lambda_pm + p/(2(p-1))``; vectorised over ``r``.
    """
    lp, lm = sigma_u_eigenvalues(params, r)
    k = params.p / (2 * (params.p - 1))
    ok = (lp > 0) & (lm > 0) & (-1 / lp + k < 0) & (-1 / lm + k < 0)
    return bool(ok) if np.ndim(ok) == 0 else ok
