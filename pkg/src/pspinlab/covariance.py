"""Conditional two-point covariance structure of the pure p-spin field.

Everything here is evaluated term by term from the displayed coefficient
table (a1..a4, b1..b4) so that each line can be audited against its
source formula; ``pspinlab.oracle`` re-derives the same quantities from the
covariance kernel and guards against transcription slips.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .scalar_theory import ModelParams, ipow


@dataclass(frozen=True)
class CoefficientSet:
    a1: float
    a2: float
    a3: float
    a4: float
    b1: float
    b2: float
    b3: float
    b4: float


@dataclass(frozen=True)
class PairCovariance:
    sigma_u: np.ndarray
    sigma_z: np.ndarray
    sigma_q: np.ndarray
    m1: float
    m2: float


@dataclass(frozen=True)
class IntegrandFactors:
    log_c_n: float
    g_of_r: float
    f_of_r: float

    @property
    def log_g(self) -> float:
        return math.log(self.g_of_r)

    @property
    def log_f(self) -> float:
        return math.log(self.f_of_r)


def _check_r(r: float):
    if not -1 < r < 1:
        raise ValueError(f"overlap r must lie in (-1, 1), got {r}")


def _rpow(r: float, k: int) -> float:
    # r^k where k may be negative only when the term's prefactor vanishes
    if k < 0:
        return 0.0 if r == 0 else float(r) ** k
    return ipow(r, k)


def coefficients(params: ModelParams, r: float) -> CoefficientSet:
    _check_r(r)
    p = params.p
    r = float(r)
    one_r2 = 1 - r * r
    lin = ipow(r, p) - (p - 1) * ipow(r, p - 2) * one_r2
    a1 = 1 / (p * (1 - ipow(r, 2 * p - 2)))
    a2 = 1 / (p * (1 - lin * lin))
    a3 = -ipow(r, p - 1) / (p * (1 - ipow(r, 2 * p - 2)))
    a4 = (-ipow(r, p) + (p - 1) * ipow(r, p - 2) * one_r2) / (p * (1 - lin * lin))
    bracket = -(p - 2) + p * r * r
    b1 = -p + a2 * p**3 * ipow(r, 2 * p - 2) * one_r2
    b2 = -p * ipow(r, p) - a4 * p**3 * ipow(r, 2 * p - 2) * one_r2
    b3 = a2 * p**2 * (p - 1) * ipow(r, 2 * p - 4) * one_r2 * bracket
    b4 = (p * (p - 1) * ipow(r, p - 2) * one_r2
          - a4 * p**2 * (p - 1) * ipow(r, 2 * p - 4) * one_r2 * bracket)
    return CoefficientSet(a1, a2, a3, a4, b1, b2, b3, b4)


def sigma_u(params: ModelParams, r: float) -> np.ndarray:
    c = coefficients(params, r)
    return -np.array([[c.b1, c.b2], [c.b2, c.b1]]) / params.p


def pair_covariance(params: ModelParams, r: float, u1: float = 0.0,
                    u2: float = 0.0) -> PairCovariance:
    """Sigma_U, Sigma_Z, Sigma_Q and the corner shifts m1, m2 at overlap r."""
    c = coefficients(params, r)
    p = params.p
    r = float(r)
    one_r2 = 1 - r * r
    su = -np.array([[c.b1, c.b2], [c.b2, c.b1]]) / p
    su_inv = np.linalg.inv(su)

    z11 = p * (p - 1) - c.a1 * p**2 * (p - 1) ** 2 * ipow(r, 2 * p - 4) * one_r2
    z12 = (p * (p - 1) ** 2 * ipow(r, p - 1)
           - p * (p - 1) * (p - 2) * ipow(r, p - 3)
           + c.a3 * p**2 * (p - 1) ** 2 * ipow(r, 2 * p - 4) * one_r2)

    b34 = np.array([c.b3, c.b4])
    q11 = (2 * p * (p - 1)
           - c.a2 * one_r2 * (p * (p - 1) * ipow(r, p - 3) * (p * r * r - (p - 2))) ** 2
           - b34 @ su_inv @ b34)
    left = np.array([c.b1 + c.b3, c.b2 + c.b4])
    right = np.array([c.b2 + c.b4, c.b1 + c.b3])
    q12 = (p**4 * ipow(r, p)
           - 2 * p * (p - 1) * (p**2 - 2 * p + 2) * ipow(r, p - 2)
           + p * (p - 1) * (p - 2) * (p - 3) * _rpow(r, p - 4)
           + c.a4 * p**2 * ipow(r, 2 * p - 6) * one_r2
           * (p**2 * r * r - (p - 1) * (p - 2)) ** 2
           - left @ su_inv @ right)

    m1 = float(b34 @ su_inv @ np.array([u1, u2]))
    m2 = float(b34 @ su_inv @ np.array([u2, u1]))
    return PairCovariance(
        sigma_u=su,
        sigma_z=np.array([[z11, z12], [z12, z11]]),
        sigma_q=np.array([[q11, q12], [q12, q11]]),
        m1=m1,
        m2=m2,
    )


def log_omega(n: int) -> float:
    """log of the surface area of the unit sphere in R^n."""
    return math.log(2) + 0.5 * n * math.log(math.pi) - gammaln(0.5 * n)


def log_c_n(params: ModelParams) -> float:
    N, p = params.N, params.p
    return (log_omega(N) + log_omega(N - 1)
            + (N - 1) * math.log((N - 1) * (p - 1) / (2 * math.pi)))


def g_factor(params: ModelParams, r):
    p = params.p
    r = np.asarray(r, dtype=float)
    out = np.sqrt((1 - r * r) / (1 - ipow(r, 2 * p - 2)))
    return out if out.ndim else float(out)


def f_factor(params: ModelParams, r):
    p = params.p
    r = np.asarray(r, dtype=float)
    g = g_factor(params, r)
    lin = p * ipow(r, p) - (p - 1) * ipow(r, p - 2)
    out = g**-3 * (1 - ipow(r, 2 * p - 2)) ** -0.5 * (1 - lin * lin) ** -0.5
    return out if np.ndim(out) else float(out)


def integrand_factors(params: ModelParams, r: float) -> IntegrandFactors:
    _check_r(r)
    return IntegrandFactors(log_c_n(params), g_factor(params, r), f_factor(params, r))


def density_phi_sigma_u(params: ModelParams, r: float, u1, u2):
    """Centred bivariate normal density with covariance Sigma_U(r)."""
    s = sigma_u(params, r)
    det = s[0, 0] ** 2 - s[0, 1] ** 2
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    quad = (s[0, 0] * (u1 * u1 + u2 * u2) - 2 * s[0, 1] * u1 * u2) / det
    out = np.exp(-0.5 * quad) / (2 * math.pi * math.sqrt(det))
    return out if out.ndim else float(out)


def log_density_phi_sigma_u(params: ModelParams, r: float, u1, u2):
    s = sigma_u(params, r)
    det = s[0, 0] ** 2 - s[0, 1] ** 2
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    quad = (s[0, 0] * (u1 * u1 + u2 * u2) - 2 * s[0, 1] * u1 * u2) / det
    return -0.5 * quad - math.log(2 * math.pi) - 0.5 * math.log(det)
