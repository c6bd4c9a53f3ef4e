"""Direct simulation of the spherical pure p-spin Hamiltonian at small N.

H(s) = N^{-(p-1)/2} sum_{i_1..i_p} J_{i_1..i_p} s_{i_1}...s_{i_p} on |s| = sqrt(N).
Couplings are stored per monomial: the J's sharing a multiset of indices sum
to a single N(0, m_alpha) variable, m_alpha = p! / prod alpha_k!, which keeps
the law of H.  A dense symmetric tensor S with H(s) = S . s^p is derived from
them for evaluation.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import null_space

from . import _homotopy
from .mc import substream, thread_count
from .scalar_theory import ModelParams

DEDUP_TOL = 1e-6
GRAD_TOL = 1e-9


class BudgetError(ValueError):
    pass


@lru_cache(maxsize=None)
def monomial_layout(N: int, p: int):
    """Monomials (sorted index tuples), their multiplicities, and flat -> monomial map."""
    monos = list(itertools.combinations_with_replacement(range(N), p))
    ident = {m: k for k, m in enumerate(monos)}
    mult = np.array([math.factorial(p) / np.prod([math.factorial(m.count(i)) for i in set(m)])
                     for m in monos])
    flat = np.array([ident[tuple(sorted(q))] for q in itertools.product(range(N), repeat=p)])
    return np.array(monos, dtype=np.int64), mult, flat


@dataclass(frozen=True)
class CouplingTensor:
    p: int
    N: int
    monomials: np.ndarray  # (M, p) sorted index tuples
    coefficients: np.ndarray  # (M,) coefficient of the monomial in H
    dense: np.ndarray = field(repr=False)  # symmetric (N,)*p tensor, H = dense . s^p


def tensor_from_coefficients(p: int, N: int, coefficients: np.ndarray) -> CouplingTensor:
    monos, mult, flat = monomial_layout(N, p)
    coefficients = np.asarray(coefficients, dtype=float)
    dense = (coefficients / mult)[flat].reshape((N,) * p)
    return CouplingTensor(p, N, monos, coefficients, dense)


def sample_couplings(params: ModelParams, seed: int, max_n: int = 12,
                     rng: np.random.Generator | None = None) -> CouplingTensor:
    N, p = params.N, params.p
    if N > max_n:
        raise BudgetError(f"N={N} exceeds the enumeration budget max_n={max_n}")
    _, mult, _ = monomial_layout(N, p)
    rng = substream(seed, 0) if rng is None else rng
    z = rng.standard_normal(mult.size)
    coef = N ** (-(p - 1) / 2) * np.sqrt(mult) * z
    return tensor_from_coefficients(p, N, coef)


def _einsum_batch(dense: np.ndarray, V: np.ndarray, keep: int) -> np.ndarray:
    """Contract all but ``keep`` axes of the tensor with each row of V."""
    p = dense.ndim
    if keep == p:
        return np.broadcast_to(dense, (V.shape[0],) + dense.shape).copy()
    letters = "abcdefghijklm"[:p]
    ops = [dense] + [V] * (p - keep)
    sub = letters + "," + ",".join("z" + c for c in letters[keep:])
    return np.einsum(sub + "->z" + letters[:keep], *ops, optimize=True)


def evaluate(tensor: CouplingTensor, sigma: np.ndarray):
    """Energy H(s), Euclidean gradient and Euclidean Hessian at s."""
    sigma = np.asarray(sigma, dtype=float)
    W = _einsum_batch(tensor.dense, sigma[None, :], 2)[0]
    g = W @ sigma
    p = tensor.p
    return float(g @ sigma), p * g, p * (p - 1) * W


def tangent_basis(sigma: np.ndarray) -> np.ndarray:
    return null_space(np.asarray(sigma, dtype=float)[None, :])


def spherical_grad_hess(tensor: CouplingTensor, sigma: np.ndarray, basis: np.ndarray | None = None):
    """Riemannian gradient (ambient coordinates) and Hessian in an orthonormal tangent basis."""
    sigma = np.asarray(sigma, dtype=float)
    N = sigma.size
    _, grad, hess = evaluate(tensor, sigma)
    P = np.eye(N) - np.outer(sigma, sigma) / N
    rgrad = P @ grad
    E = tangent_basis(sigma) if basis is None else basis
    radial = sigma @ grad / N
    return rgrad, E.T @ hess @ E - radial * np.eye(E.shape[1])


# ---------------------------------------------------------------------------
# census


@dataclass(frozen=True)
class CriticalPointRecord:
    sigma: np.ndarray
    energy: float  # H / N
    index: int
    grad_norm: float
    min_abs_eig: float = math.nan


@dataclass
class LandscapeCensus:
    N: int
    p: int
    points: list
    complete: bool
    dedup_tol: float = DEDUP_TOL
    certificate: str = "none"  # exact | homotopy | heuristic | none
    morse_sum: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def energies(self) -> np.ndarray:
        return np.array([r.energy for r in self.points])

    @property
    def indices(self) -> np.ndarray:
        return np.array([r.index for r in self.points], dtype=int)

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([r.sigma for r in self.points]).reshape(len(self.points), self.N)


def euler_characteristic(N: int) -> int:
    """chi(S^{N-1})."""
    return 2 if N % 2 == 1 else 0


def _unit_data(dense: np.ndarray, V: np.ndarray):
    p = dense.ndim
    W = _einsum_batch(dense, V, 2)
    g = np.einsum("zij,zj->zi", W, V)
    f = np.einsum("zi,zi->z", g, V)
    mu = p * f
    rg = p * g - mu[:, None] * V
    N = V.shape[1]
    P = np.eye(N)[None] - V[:, :, None] * V[:, None, :]
    Hr = P @ (p * (p - 1) * W) @ P - mu[:, None, None] * P
    return f, rg, Hr


def _newton_unit(dense, V, iters=8, trust=None, tol=1e-15):
    """Riemannian Newton on the unit sphere for f(v) = S . v^p, rows of V in parallel."""
    V = V / np.linalg.norm(V, axis=1, keepdims=True)
    for _ in range(iters):
        _, rg, Hr = _unit_data(dense, V)
        active = np.linalg.norm(rg, axis=1) > tol
        if not active.any():
            break
        A = Hr + V[:, :, None] * V[:, None, :]
        try:
            xi = np.linalg.solve(A, -rg[..., None])[..., 0]
        except np.linalg.LinAlgError:
            xi = np.stack([np.linalg.lstsq(a, -b, rcond=None)[0] for a, b in zip(A, rg)])
        if trust is not None:
            nrm = np.linalg.norm(xi, axis=1, keepdims=True)
            xi = np.where(nrm > trust, xi * trust / np.maximum(nrm, 1e-300), xi)
        xi[~active] = 0.0
        V = V + xi
        V /= np.linalg.norm(V, axis=1, keepdims=True)
    return V


def _dedup(V: np.ndarray, tol: float) -> np.ndarray:
    if V.shape[0] <= 1:
        return V
    d = np.linalg.norm(V[:, None, :] - V[None, :, :], axis=2)
    keep = np.ones(V.shape[0], bool)
    for i in range(V.shape[0]):
        if keep[i]:
            close = d[i] <= tol
            close[: i + 1] = False
            keep[close] = False
    return V[keep]


def _records(tensor: CouplingTensor, V: np.ndarray) -> list:
    """Records for unit directions V (already polished), sorted by energy then sigma."""
    N, p = tensor.N, tensor.p
    if V.shape[0] == 0:
        return []
    f, rg, Hr = _unit_data(tensor.dense, V)
    c = 1.0 + np.abs(Hr).max()
    eigs = np.linalg.eigvalsh(Hr + c * V[:, :, None] * V[:, None, :])
    # the shifted normal direction carries eigenvalue >= c and never counts
    tangent = np.sort(eigs, axis=1)
    idx = (tangent < 0).sum(axis=1)
    min_abs = np.where(np.abs(tangent) < c * 0.5, np.abs(tangent), np.inf).min(axis=1)
    scale_g = N ** ((p - 1) / 2)
    scale_h = N ** ((p - 2) / 2)
    recs = [CriticalPointRecord(math.sqrt(N) * V[k], float(N ** (p / 2 - 1) * f[k]), int(idx[k]),
                                float(scale_g * np.linalg.norm(rg[k])), float(scale_h * min_abs[k]))
            for k in range(V.shape[0])]
    recs.sort(key=lambda r: (r.energy, tuple(r.sigma)))
    return recs


def _finish(tensor, V, complete, certificate, diagnostics, dedup_tol):
    V = _newton_unit(tensor.dense, np.vstack([V, -V]) if V.size else V.reshape(0, tensor.N))
    V = _dedup(V, dedup_tol)
    recs = _records(tensor, V)
    bad = [r for r in recs if r.grad_norm > GRAD_TOL]
    if bad:
        diagnostics["unconverged"] = len(bad)
        recs = [r for r in recs if r.grad_norm <= GRAD_TOL]
    morse = int(sum((-1) ** r.index for r in recs))
    ok_morse = morse == euler_characteristic(tensor.N) and len(recs) % 2 == 0
    diagnostics["morse_ok"] = ok_morse
    if complete and not ok_morse:
        complete = False
        certificate = "none"
    return LandscapeCensus(tensor.N, tensor.p, recs, complete, dedup_tol, certificate, morse,
                           diagnostics)


def _angle_census(tensor: CouplingTensor, dedup_tol: float = DEDUP_TOL):
    p = tensor.p
    # H(theta) = sum_j a_j cos^{p-j} sin^j on the circle of radius sqrt(2)
    coef = np.zeros(p + 1)
    for m, c in zip(tensor.monomials, tensor.coefficients):
        coef[int(m.sum())] += c * 2 ** (p / 2)
    # dH/dtheta = sum_k d_k cos^{p-k} sin^k, a degree-p polynomial in tan(theta) after dividing by cos^p
    d = np.zeros(p + 1)
    for k in range(p + 1):
        if k + 1 <= p:
            d[k] += (k + 1) * coef[k + 1]
        if k >= 1:
            d[k] -= (p - k + 1) * coef[k - 1]
    scale = np.abs(d).max()
    if scale == 0:
        raise ArithmeticError("degenerate coupling: H is constant on the circle")
    t = np.roots(d[::-1] / scale)
    t = t[np.abs(t.imag) <= 1e-7 * (1 + np.abs(t))].real
    angles = list(np.arctan(t))
    # a vanishing leading coefficient puts a root at cos(theta) = 0
    if abs(d[p]) <= 1e-14 * scale:
        angles.append(math.pi / 2)
    angles = np.asarray(angles)
    angles = np.concatenate([angles, angles + math.pi])
    V = np.column_stack([np.cos(angles), np.sin(angles)]) if angles.size else np.zeros((0, 2))
    census = _finish(tensor, V, True, "exact", {"tan_roots": int(angles.size // 2)}, dedup_tol)
    if len(census.points) > 2 * tensor.p:
        raise ArithmeticError("more critical points than a degree-p trigonometric polynomial allows")
    return census


def _homotopy_census(tensor: CouplingTensor, rng: np.random.Generator, retries: int = 3,
                     dedup_tol: float = DEDUP_TOL):
    N, p = tensor.N, tensor.p
    T = tensor.dense / np.linalg.norm(tensor.dense)
    Tf = T.ravel().astype(np.complex128)
    starts = _homotopy.start_roots(N, p)
    diag = {"paths": starts.shape[0]}
    best = None
    for attempt in range(retries + 1):
        gamma = np.exp(2j * math.pi * rng.random())
        ends, status = _homotopy.track(Tf, starts, gamma, p)
        failed = int((status == 0).sum())
        finite = ends[status == 1]
        scale = 1.0 + np.abs(finite).max() if finite.size else 1.0
        d = np.linalg.norm(finite[:, None, :] - finite[None, :, :], axis=2)
        np.fill_diagonal(d, np.inf)
        dup = int((d.min(axis=1) < 1e-6 * scale).sum()) if finite.shape[0] > 1 else 0
        best = (ends, status, failed, dup)
        if failed == 0 and dup == 0:
            break
    ends, status, failed, dup = best
    diag.update(failed_paths=failed, duplicate_endpoints=dup, attempts=attempt + 1)
    complete = failed == 0 and dup == 0
    X = ends[status == 1]
    nrm = np.linalg.norm(X, axis=1)
    X = X[nrm > 1e-8]
    # rotate each solution so sum x_i^2 is real; real eigenvector classes become real
    phase = np.exp(-0.5j * np.angle((X * X).sum(axis=1)))
    Y = X * phase[:, None]
    real = np.linalg.norm(Y.imag, axis=1) <= 1e-6 * np.linalg.norm(Y, axis=1)
    V = Y[real].real
    return _finish(tensor, V, complete, "homotopy" if complete else "none", diag, dedup_tol)


def _multistart_once(tensor, rng, budget, dedup_tol):
    N = tensor.N
    V0 = rng.standard_normal((budget, N))
    V = _newton_unit(tensor.dense, V0, iters=60, trust=0.3)
    _, rg, _ = _unit_data(tensor.dense, V)
    conv = np.linalg.norm(rg, axis=1) < 1e-10
    return _dedup(V[conv], dedup_tol), int((~conv).sum())


def _multistart_census(tensor, rng, budget, dedup_tol=DEDUP_TOL):
    V1, bad1 = _multistart_once(tensor, rng, budget, dedup_tol)
    c1 = _finish(tensor, V1, False, "none", {}, dedup_tol)
    V2, bad2 = _multistart_once(tensor, rng, 2 * budget, dedup_tol)
    V = np.vstack([V1, V2]) if V1.size else V2
    census = _finish(tensor, V, False, "none",
                     {"budget": budget, "nonconvergent_starts": bad1 + bad2}, dedup_tol)
    stable = len(c1.points) == len(census.points)
    if stable and census.diagnostics["morse_ok"]:
        census.complete = True
        census.certificate = "heuristic"
    census.diagnostics["budget_stable"] = stable
    return census


def enumerate_critical_points(tensor: CouplingTensor, method: str = "auto", budget: int | None = None,
                              seed: int = 0, dedup_tol: float = DEDUP_TOL) -> LandscapeCensus:
    """All critical points of H on the sphere.

    ``angle`` (N = 2): real roots of dH/dtheta as a polynomial in tan(theta), exact.
    ``homotopy`` (N >= 3, default): total-degree homotopy on the eigenvector
    system; complete when every path converges to a distinct endpoint and
    the Morse sum matches.  ``multistart``: trust-capped Riemannian Newton
    from random starts, complete only heuristically (count stable when the
    budget doubles, Morse sum matches).
    """
    if method == "auto":
        method = "angle" if tensor.N == 2 else "homotopy"
    rng = substream(seed, 1)
    if method == "angle":
        if tensor.N != 2:
            raise ValueError("angle method needs N = 2")
        return _angle_census(tensor, dedup_tol=dedup_tol)
    if tensor.N < 2:
        raise ValueError("N must be >= 2")
    if method == "homotopy":
        return _homotopy_census(tensor, rng, dedup_tol=dedup_tol)
    if method == "multistart":
        if budget is None:
            # ~200 starts per expected critical point; the mean count grows like (p-1)^{N/2}
            budget = int(200 * 2 * (tensor.p - 1) ** (tensor.N / 2))
        return _multistart_census(tensor, rng, budget, dedup_tol)
    raise ValueError(method)


def verify_census(tensor: CouplingTensor, census: LandscapeCensus, eig_tol: float = 1e-8) -> dict:
    """Recompute gradients and indices from scratch for every record."""
    worst, unstable, index_mismatch = 0.0, 0, 0
    for r in census.points:
        rg, rh = spherical_grad_hess(tensor, r.sigma)
        worst = max(worst, float(np.linalg.norm(rg)))
        ev = np.linalg.eigvalsh(rh)
        if int((ev < 0).sum()) != r.index:
            index_mismatch += 1
        if np.abs(ev).min() < eig_tol:
            unstable += 1
    return {"max_grad_norm": worst, "unstable_index": unstable, "index_mismatch": index_mismatch}


# ---------------------------------------------------------------------------
# counts


def _in_window(e, lo, hi):
    return (e > lo) & (e < hi)


def count_crt(census: LandscapeCensus, window) -> int:
    e = census.energies
    return int(_in_window(e, window.lo, window.hi).sum()) if e.size else 0


def overlap_matrix(census: LandscapeCensus) -> np.ndarray:
    S = census.sigmas
    R = S @ S.T / census.N
    R[np.abs(R - 1) < 1e-9] = 1.0
    R[np.abs(R + 1) < 1e-9] = -1.0
    return R


def pair_count(census: LandscapeCensus, window, overlap_window) -> int:
    """Ordered pairs with both energies in the window and lo <= R < hi (R = 1 kept when hi = 1).

    With the full window [-1, 1] this equals count_crt(window)^2.
    """
    sel = _in_window(census.energies, window.lo, window.hi) if census.points else np.zeros(0, bool)
    if not sel.any():
        return 0
    R = overlap_matrix(census)[np.ix_(sel, sel)]
    lo, hi = overlap_window.lo, overlap_window.hi
    m = (R >= lo) & ((R < hi) | ((hi >= 1) & (R >= 1)))
    return int(m.sum())


# ---------------------------------------------------------------------------
# batches and concentration


def census_batch(params: ModelParams, n_trials: int, seed: int, method: str = "auto",
                 threads: int | None = None) -> list:
    """Independent censuses; trial k uses substream (seed, k) for both couplings and tracking."""
    def one(k):
        t = sample_couplings(params, 0, rng=substream(seed, k, 0))
        return enumerate_critical_points(t, method, seed=int(np.random.SeedSequence(
            [seed, k]).generate_state(1)[0]))
    nt = thread_count(threads)
    if nt == 1:
        return [one(k) for k in range(n_trials)]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(nt) as ex:
        return list(ex.map(one, range(n_trials)))


@dataclass(frozen=True)
class ConcentrationResult:
    mean: float
    variance: float
    mean_stderr: float
    ratio: float  # E[X^2] / (E X)^2
    ratio_ci: tuple[float, float]
    ratio_stderr: float
    n_trials: int
    n_incomplete: int


def concentration_from_counts(counts, n_incomplete: int = 0, seed: int = 0,
                              n_boot: int = 2000, level: float = 0.95) -> ConcentrationResult:
    x = np.asarray(counts, dtype=float)
    n = x.size
    m = x.mean()
    ratio = float((x * x).mean() / m ** 2)
    rng = substream(seed, 99)
    idx = rng.integers(0, n, size=(n_boot, n))
    xb = x[idx]
    rb = (xb * xb).mean(axis=1) / xb.mean(axis=1) ** 2
    a = (1 - level) / 2
    ci = (float(np.quantile(rb, a)), float(np.quantile(rb, 1 - a)))
    return ConcentrationResult(float(m), float(x.var(ddof=1)), float(x.std(ddof=1) / math.sqrt(n)),
                               ratio, ci, float(rb.std(ddof=1)), n, n_incomplete)


def empirical_concentration(params: ModelParams, u: float, n_trials: int, seed: int,
                            method: str = "auto", censuses: list | None = None,
                            n_boot: int = 2000) -> ConcentrationResult:
    """Mean, variance and second-moment ratio of Crt_N((-inf, u)) over independent draws."""
    from .kac_rice import EnergyWindow
    if censuses is None:
        censuses = census_batch(params, n_trials, seed, method)
    w = EnergyWindow.below(u)
    counts = [count_crt(c, w) for c in censuses]
    return concentration_from_counts(counts, sum(not c.complete for c in censuses), seed, n_boot)


# ---------------------------------------------------------------------------
# export / import


def census_to_csv(census: LandscapeCensus) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["energy", "index", "grad_norm"] + [f"sigma_{i}" for i in range(census.N)])
    for r in census.points:
        w.writerow([f"{r.energy:.17g}", r.index, f"{r.grad_norm:.17g}"]
                   + [f"{v:.17g}" for v in r.sigma])
    return buf.getvalue()


def census_to_json(census: LandscapeCensus) -> str:
    d = {"N": census.N, "p": census.p, "complete": census.complete, "dedup_tol": census.dedup_tol,
         "certificate": census.certificate, "morse_sum": census.morse_sum,
         "diagnostics": census.diagnostics,
         "points": [{**asdict(r), "sigma": [float(v) for v in r.sigma]} for r in census.points]}
    return json.dumps(d, indent=1, default=float)


def census_from_json(text: str) -> LandscapeCensus:
    d = json.loads(text)
    pts = [CriticalPointRecord(np.array(r["sigma"]), r["energy"], r["index"], r["grad_norm"],
                               r.get("min_abs_eig", math.nan)) for r in d["points"]]
    return LandscapeCensus(d["N"], d["p"], pts, d["complete"], d["dedup_tol"], d["certificate"],
                           d["morse_sum"], d.get("diagnostics", {}))


def census_from_csv(text: str, p: int, complete: bool = False) -> LandscapeCensus:
    rows = list(csv.reader(io.StringIO(text)))
    head, body = rows[0], [r for r in rows[1:] if r and not r[0].startswith("#")]
    N = len(head) - 3
    pts = [CriticalPointRecord(np.array([float(v) for v in r[3:]]), float(r[0]), int(r[1]), float(r[2]))
           for r in body]
    morse = int(sum((-1) ** q.index for q in pts))
    return LandscapeCensus(N, p, pts, complete, DEDUP_TOL, "imported", morse)
