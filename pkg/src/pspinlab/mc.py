"""Seeded Monte Carlo plumbing shared by the sampling modules.

Every estimator draws from substreams ``SeedSequence(seed, spawn_key=key)``
where the key is a tuple of small integers naming the stage and chunk.  Chunks
have a fixed size, are evaluated in any order (possibly on a thread pool) and
reduced in chunk order, so results do not depend on the thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

THREADS_ENV = "PSPINLAB_THREADS"
DEFAULT_CHUNK = 2048


@dataclass(frozen=True)
class MomentEstimate:
    """A Monte Carlo mean with its standard error.

    With ``log_scale`` set, ``value`` is the log of the estimated mean and
    ``stderr`` is the relative standard error (the delta-method stderr of the
    log).
    """

    value: float
    stderr: float
    n_samples: int
    seed: int
    log_scale: bool = False

    def linear(self) -> tuple[float, float]:
        if not self.log_scale:
            return self.value, self.stderr
        v = math.exp(self.value)
        return v, v * self.stderr

    def log(self) -> tuple[float, float]:
        if self.log_scale:
            return self.value, self.stderr
        if self.value <= 0:
            return -math.inf, math.inf
        return math.log(self.value), self.stderr / self.value


def thread_count(threads: int | None = None) -> int:
    if threads is not None:
        return max(1, int(threads))
    return max(1, int(os.environ.get(THREADS_ENV, "1")))


def substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=tuple(key))))


def chunk_sizes(n: int, chunk: int = DEFAULT_CHUNK) -> list[int]:
    out = [chunk] * (n // chunk)
    if n % chunk:
        out.append(n % chunk)
    return out


def map_chunks(fn, seed: int, stage: int, n: int, chunk: int = DEFAULT_CHUNK,
               threads: int | None = None) -> list:
    """Apply ``fn(rng, size)`` to each chunk; results come back in chunk order."""
    sizes = chunk_sizes(n, chunk)
    jobs = [(substream(seed, stage, i), s) for i, s in enumerate(sizes)]
    nt = thread_count(threads)
    if nt == 1 or len(jobs) == 1:
        return [fn(r, s) for r, s in jobs]
    with ThreadPoolExecutor(nt) as ex:
        return list(ex.map(lambda job: fn(*job), jobs))


def mean_estimate(x: np.ndarray, seed: int = 0) -> MomentEstimate:
    x = np.asarray(x, dtype=float)
    n = x.size
    se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return MomentEstimate(float(x.mean()), se, n, seed, False)


def log_mean_exp_estimate(logs: np.ndarray, seed: int = 0) -> MomentEstimate:
    """Log of the mean of exp(logs), with the relative standard error."""
    logs = np.asarray(logs, dtype=float)
    n = logs.size
    if n == 0 or not np.isfinite(logs.max(initial=-np.inf)):
        return MomentEstimate(-math.inf, math.inf, n, seed, True)
    lm = float(logsumexp(logs) - math.log(n))
    w = np.exp(logs - logs.max())
    rel = float(w.std(ddof=1) / w.mean() / math.sqrt(n)) if n > 1 else math.inf
    return MomentEstimate(lm, rel, n, seed, True)


def ratio_estimate(num: np.ndarray, den: np.ndarray) -> tuple[float, float]:
    """Ratio of sample means with the delta-method standard error."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    n = num.size
    mn, md = num.mean(), den.mean()
    q = mn / md
    resid = num - q * den
    return float(q), float(resid.std(ddof=1) / (abs(md) * math.sqrt(n)))
