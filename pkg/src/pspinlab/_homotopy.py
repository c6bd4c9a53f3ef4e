"""Total-degree homotopy for the eigenvector system p T x^{p-1} = x.

T is a dense symmetric tensor flattened in C order.  The start system is
x_i^{p-1} = 1 and the homotopy is (1 - t) gamma G(x) + t F(x); with a generic
complex gamma every one of the (p-1)^N start roots is joined to a distinct
finite solution.  Tracking uses an RK4 predictor and a Newton corrector with
step-size control.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np


@nb.njit(cache=True, inline="always")
def _contract(T, x, n, p, work, W, g):
    # W = T . x^{p-2} (n x n), g = W x
    L = T.shape[0]
    for i in range(L):
        work[i] = T[i]
    size = L
    for _ in range(p - 2):
        size //= n
        for a in range(size):
            s = 0j
            base = a * n
            for j in range(n):
                s += work[base + j] * x[j]
            work[a] = s
    for i in range(n):
        s = 0j
        for j in range(n):
            W[i, j] = work[i * n + j]
            s += work[i * n + j] * x[j]
        g[i] = s


@nb.njit(cache=True, inline="always")
def _solve(A, b, out, n):
    # Gaussian elimination with partial pivoting; overwrites A and b
    for k in range(n):
        piv = k
        best = abs(A[k, k])
        for i in range(k + 1, n):
            v = abs(A[i, k])
            if v > best:
                best = v
                piv = i
        if best == 0.0:
            return False
        if piv != k:
            for j in range(n):
                tmp = A[k, j]
                A[k, j] = A[piv, j]
                A[piv, j] = tmp
            tmp = b[k]
            b[k] = b[piv]
            b[piv] = tmp
        inv = 1.0 / A[k, k]
        for i in range(k + 1, n):
            f = A[i, k] * inv
            if f != 0:
                for j in range(k + 1, n):
                    A[i, j] -= f * A[k, j]
                b[i] -= f * b[k]
    for i in range(n - 1, -1, -1):
        s = b[i]
        for j in range(i + 1, n):
            s -= A[i, j] * out[j]
        out[i] = s / A[i, i]
    return True


@nb.njit(cache=True)
def _system(T, x, t, gamma, p, n, work, W, g, H, Hx, Ht):
    _contract(T, x, n, p, work, W, g)
    for i in range(n):
        xp2 = 1.0 + 0j
        for _ in range(p - 2):
            xp2 *= x[i]
        G = xp2 * x[i] - 1.0
        Gd = (p - 1) * xp2
        Fi = p * g[i] - x[i]
        H[i] = (1 - t) * gamma * G + t * Fi
        Ht[i] = Fi - gamma * G
        for j in range(n):
            Hx[i, j] = t * p * (p - 1) * W[i, j]
        Hx[i, i] += (1 - t) * gamma * Gd - t


@nb.njit(cache=True)
def _dxdt(T, x, t, gamma, p, n, work, W, g, H, Hx, Ht, out):
    _system(T, x, t, gamma, p, n, work, W, g, H, Hx, Ht)
    for i in range(n):
        Ht[i] = -Ht[i]
    return _solve(Hx, Ht, out, n)


@nb.njit(cache=True, nogil=True)
def track(T, starts, gamma, p):
    """Track every start root from t = 0 to t = 1.

    Returns the endpoints and a status per path (1 = reached t = 1).
    """
    P, n = starts.shape
    out = np.empty((P, n), np.complex128)
    status = np.zeros(P, np.int64)
    work = np.empty(T.shape[0], np.complex128)
    W = np.empty((n, n), np.complex128)
    g = np.empty(n, np.complex128)
    H = np.empty(n, np.complex128)
    Ht = np.empty(n, np.complex128)
    Hx = np.empty((n, n), np.complex128)
    k1 = np.empty(n, np.complex128)
    k2 = np.empty(n, np.complex128)
    k3 = np.empty(n, np.complex128)
    k4 = np.empty(n, np.complex128)
    xt = np.empty(n, np.complex128)
    d = np.empty(n, np.complex128)
    x = np.empty(n, np.complex128)
    for ip in range(P):
        for i in range(n):
            x[i] = starts[ip, i]
        t = 0.0
        h = 0.05
        succ = 0
        ok = True
        ns = 0
        while t < 1.0:
            ns += 1
            if ns > 5000 or h < 1e-13:
                ok = False
                break
            if h > 1.0 - t:
                h = 1.0 - t
            _dxdt(T, x, t, gamma, p, n, work, W, g, H, Hx, Ht, k1)
            for i in range(n):
                xt[i] = x[i] + 0.5 * h * k1[i]
            _dxdt(T, xt, t + 0.5 * h, gamma, p, n, work, W, g, H, Hx, Ht, k2)
            for i in range(n):
                xt[i] = x[i] + 0.5 * h * k2[i]
            _dxdt(T, xt, t + 0.5 * h, gamma, p, n, work, W, g, H, Hx, Ht, k3)
            for i in range(n):
                xt[i] = x[i] + h * k3[i]
            _dxdt(T, xt, t + h, gamma, p, n, work, W, g, H, Hx, Ht, k4)
            nx = 0.0
            for i in range(n):
                xt[i] = x[i] + h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i])
                nx += abs(xt[i]) ** 2
            nx = 1.0 + math.sqrt(nx)
            conv = False
            for it in range(3):
                _system(T, xt, t + h, gamma, p, n, work, W, g, H, Hx, Ht)
                _solve(Hx, H, d, n)
                dn = 0.0
                for i in range(n):
                    xt[i] -= d[i]
                    dn += abs(d[i]) ** 2
                dn = math.sqrt(dn)
                # a large first correction means the predictor left the path
                if it == 0 and dn > 0.05 * nx:
                    break
                if dn < 1e-9 * nx:
                    conv = True
                    break
            if conv:
                for i in range(n):
                    x[i] = xt[i]
                t += h
                succ += 1
                if succ >= 2:
                    h *= 2.0
                    succ = 0
            else:
                h *= 0.5
                succ = 0
        if ok:
            for it in range(6):
                _system(T, x, 1.0, gamma, p, n, work, W, g, H, Hx, Ht)
                _solve(Hx, H, d, n)
                for i in range(n):
                    x[i] -= d[i]
        for i in range(n):
            out[ip, i] = x[i]
        status[ip] = 1 if ok else 0
    return out, status


def start_roots(n: int, p: int) -> np.ndarray:
    """All solutions of x_i^{p-1} = 1, shape ((p-1)^n, n)."""
    roots = np.exp(2j * np.pi * np.arange(p - 1) / (p - 1))
    grids = np.meshgrid(*([roots] * n), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1).astype(np.complex128)
