"""Error analysis for relaxed sketches.

Theta: the estimate ``(k-1)/Theta`` when an adversary may hide up to ``r``
updates.  A weak adversary always hides the ``r`` smallest hashes, so
``Theta = M_(k+r)`` (the (k+r)-th smallest of ``n`` uniforms).  A strong
adversary sees the hashes first and picks whichever of ``M_(k)`` and
``M_(k+r)`` puts the estimate further from ``n``.

Quantiles: rank intervals for the element returned when ``i`` updates below
and ``j`` above the target are hidden.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate, stats
from scipy.special import gammaln

__all__ = [
    "ThetaErrorParams",
    "EstimatorStats",
    "QuantilesErrorParams",
    "QuadratureError",
    "weak_expectation",
    "weak_exact_stats",
    "weak_rse_bound",
    "sequential_rse_bound",
    "joint_pdf",
    "log_joint_pdf",
    "strong_choice",
    "strong_estimate_stats",
    "simulate_adversary",
    "adversary_estimates",
    "empirical_stats",
    "quantiles_range",
    "quantiles_rank_range",
    "quantiles_relaxation_error_bound",
    "quantiles_adversary_worst_split",
    "worst_split_bruteforce",
    "STATS_COLUMNS",
    "stats_row",
]

QUAD_RTOL = 1e-4
_TAIL = 1e-13  # probability mass cut from each tail of the integration range


class QuadratureError(ArithmeticError):
    """Adaptive quadrature did not reach the requested relative tolerance."""

    def __init__(self, what: str, achieved: float, wanted: float):
        super().__init__(f"{what}: achieved relative error {achieved:.3g} > {wanted:.3g}")
        self.achieved = achieved
        self.wanted = wanted


@dataclass(frozen=True)
class ThetaErrorParams:
    n: int
    k: int
    r: int

    def __post_init__(self):
        if self.k < 3:
            raise ValueError(f"k must be >= 3, got {self.k}")
        if self.r < 0:
            raise ValueError(f"r must be >= 0, got {self.r}")
        if self.n <= self.k + self.r:
            raise ValueError(f"need n > k + r, got n={self.n}, k+r={self.k + self.r}")


@dataclass(frozen=True)
class EstimatorStats:
    """Moments of an estimator of ``n``.

    ``rse`` is ``sqrt(E[(e - n)^2]) / n``.  Monte-Carlo results also carry
    standard errors of ``mean`` and ``rse``; numerical ones leave them 0.
    """

    mean: float
    variance: float
    rse: float
    se_mean: float = 0.0
    se_rse: float = 0.0
    trials: int = 0

    def relative_mean(self, n: int) -> float:
        return self.mean / n


@dataclass(frozen=True)
class QuantilesErrorParams:
    phi: float
    n: int
    r: int
    eps: float
    delta: float = 0.01
    i: int = 0
    j: int = 0

    def __post_init__(self):
        if not 0.0 <= self.phi <= 1.0:
            raise ValueError(f"phi must be in [0, 1], got {self.phi}")
        if not 0.0 < self.eps < 0.5:
            raise ValueError(f"eps must be in (0, 0.5), got {self.eps}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        if self.n < 1 or self.r < 0:
            raise ValueError("need n >= 1 and r >= 0")
        if self.i < 0 or self.j < 0 or self.i + self.j > self.r:
            raise ValueError(f"need 0 <= i + j <= r, got i={self.i}, j={self.j}, r={self.r}")


# -- weak adversary, closed form -------------------------------------------------

def weak_expectation(p: ThetaErrorParams) -> float:
    """E[(k-1)/M_(k+r)] = n(k-1)/(k+r-1)."""
    return p.n * (p.k - 1) / (p.k + p.r - 1)


def weak_exact_stats(p: ThetaErrorParams) -> EstimatorStats:
    """Exact moments of ``(k-1)/M_(k+r)`` using E[M_(j)^-2] = n(n-1)/((j-1)(j-2))."""
    j = p.k + p.r
    mean = weak_expectation(p)
    second = (p.k - 1) ** 2 * p.n * (p.n - 1) / ((j - 1) * (j - 2))
    variance = second - mean * mean
    mse = second - 2 * p.n * mean + p.n * p.n
    return EstimatorStats(mean, variance, math.sqrt(mse) / p.n)


def sequential_rse_bound(k: int) -> float:
    if k < 3:
        raise ValueError(f"k must be >= 3, got {k}")
    return 1.0 / math.sqrt(k - 2)


def weak_rse_bound(k: int, r: int) -> float:
    """sqrt(1/(k-2)) + r/(k-2)."""
    if k < 3:
        raise ValueError(f"k must be >= 3, got {k}")
    return math.sqrt(1.0 / (k - 2)) + r / (k - 2)


# -- joint density of (M_(k), M_(k+r)) --------------------------------------------

def _log_norm(p: ThetaErrorParams) -> float:
    n, k, r = p.n, p.k, p.r
    return gammaln(n + 1) - gammaln(k) - gammaln(r) - gammaln(n - k - r + 1)


def log_joint_pdf(m_k, m_kr, p: ThetaErrorParams):
    """Log density; ``-inf`` outside ``0 < m_k < m_kr < 1``.  Needs ``r >= 1``."""
    if p.r < 1:
        raise ValueError("the joint density of M_(k), M_(k+r) needs r >= 1")
    a = np.asarray(m_k, dtype=float)
    c = np.asarray(m_kr, dtype=float)
    inside = (a > 0) & (a < c) & (c < 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (_log_norm(p) + (p.k - 1) * np.log(a) + (p.r - 1) * np.log(c - a)
               + (p.n - p.k - p.r) * np.log1p(-c))
    out = np.where(inside, val, -np.inf)
    return float(out) if out.ndim == 0 else out


def joint_pdf(m_k, m_kr, p: ThetaErrorParams):
    """n! a^(k-1)/(k-1)! (c-a)^(r-1)/(r-1)! (1-c)^(n-k-r)/(n-k-r)!, in log space."""
    out = np.exp(log_joint_pdf(m_k, m_kr, p))
    return float(out) if np.ndim(out) == 0 else out


# -- strong adversary ------------------------------------------------------------

def strong_choice(m_k, m_kr, n: int, k: int):
    """Estimate the strong adversary forces: the one of (k-1)/m_k, (k-1)/m_kr
    further from ``n`` (ties go to the (k+r)-th minimum)."""
    x = (k - 1) / np.asarray(m_k, dtype=float)
    y = (k - 1) / np.asarray(m_kr, dtype=float)
    return np.where(np.abs(x - n) > np.abs(y - n), x, y)


def _quad(f, lo, hi, points, epsrel):
    pts = [q for q in points if lo < q < hi]
    val, err = integrate.quad(f, lo, hi, points=pts or None, epsabs=0.0,
                              epsrel=epsrel, limit=400)
    return val, err


def _strong_moment(p: ThetaErrorParams, power: int) -> tuple[float, float]:
    n, k, r = p.n, p.k, p.r
    log_norm = _log_norm(p)
    a_lo, a_hi = stats.beta.ppf([_TAIL, 1 - _TAIL], k, n - k + 1)
    # spacing M_(k+r) - M_(k) given M_(k)=a is (1-a) * Beta(r, n-k-r+1)
    d_hi = stats.beta.ppf(1 - _TAIL, r, n - k - r + 1)

    def inner(a: float) -> float:
        x = (k - 1) / a
        points = []
        # the strong choice switches where (k-1)/c = 2n - x
        if n < x < 2 * n:
            points.append((k - 1) / (2 * n - x))
        base = log_norm + (k - 1) * math.log(a)

        def f(c: float) -> float:
            if c <= a or c >= 1:
                return 0.0
            y = (k - 1) / c
            e = x if abs(x - n) > abs(y - n) else y
            lp = base + (r - 1) * math.log(c - a) + (n - k - r) * math.log1p(-c)
            return e ** power * math.exp(lp)

        val, _ = _quad(f, a, a + (1 - a) * d_hi, points, 1e-10)
        return val

    # outer breakpoint where (k-1)/a = n splits the two regions
    return _quad(inner, a_lo, a_hi, [(k - 1) / n], 1e-9)


def _sequential_moment(p: ThetaErrorParams, power: int) -> tuple[float, float]:
    n, k = p.n, p.k
    lo, hi = stats.beta.ppf([_TAIL, 1 - _TAIL], k, n - k + 1)
    dist = stats.beta(k, n - k + 1)
    return _quad(lambda a: ((k - 1) / a) ** power * dist.pdf(a), lo, hi, [], 1e-10)


def strong_estimate_stats(p: ThetaErrorParams, rtol: float = QUAD_RTOL) -> EstimatorStats:
    """Mean, variance and RSE of the strong adversary's estimate by quadrature.

    Raises :class:`QuadratureError` if any moment misses ``rtol``.
    """
    moment = _sequential_moment if p.r == 0 else _strong_moment
    vals = []
    for power in (0, 1, 2):
        val, err = moment(p, power)
        rel = err / abs(val) if val else math.inf
        if rel > rtol:
            raise QuadratureError(f"moment {power}", rel, rtol)
        vals.append(val)
    mass, first, second = vals
    if abs(mass - 1.0) > rtol:
        raise QuadratureError("density mass", abs(mass - 1.0), rtol)
    mean = first
    variance = max(second - mean * mean, 0.0)
    mse = second - 2 * p.n * mean + p.n * p.n
    return EstimatorStats(mean, variance, math.sqrt(max(mse, 0.0)) / p.n)


# -- Monte Carlo -------------------------------------------------------------------

def adversary_estimates(p: ThetaErrorParams, trials: int, seed: int,
                        batch: int | None = None) -> dict[str, np.ndarray]:
    """Per-trial estimates of the sequential, weak and strong runs on shared draws.

    Each trial draws ``n`` uniform hashes and reads off ``M_(k)`` and ``M_(k+r)``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    n, k, r = p.n, p.k, p.r
    rng = np.random.default_rng(seed)
    if batch is None:
        batch = max(1, min(trials, (1 << 22) // n))
    kth = sorted({k - 1, k + r - 1})
    mk = np.empty(trials)
    mkr = np.empty(trials)
    done = 0
    while done < trials:
        m = min(batch, trials - done)
        u = np.partition(rng.random((m, n)), kth, axis=1)
        mk[done:done + m] = u[:, k - 1]
        mkr[done:done + m] = u[:, k + r - 1]
        done += m
    return {
        "sequential": (k - 1) / mk,
        "weak": (k - 1) / mkr,
        "strong": strong_choice(mk, mkr, n, k),
    }


def empirical_stats(est: np.ndarray, n: int) -> EstimatorStats:
    """Stats of per-trial estimates of ``n``, with standard errors."""
    t = len(est)
    mean = float(est.mean())
    variance = float(est.var(ddof=1)) if t > 1 else 0.0
    d2 = ((est - n) / n) ** 2
    msre = float(d2.mean())
    rse = math.sqrt(msre)
    se_mean = math.sqrt(variance / t)
    se_msre = float(d2.std(ddof=1)) / math.sqrt(t) if t > 1 else 0.0
    se_rse = se_msre / (2 * rse) if rse > 0 else 0.0
    return EstimatorStats(mean, variance, rse, se_mean, se_rse, t)


def simulate_adversary(p: ThetaErrorParams, mode: str, trials: int, seed: int) -> EstimatorStats:
    """Monte-Carlo stats for ``mode`` in {"sequential", "weak", "strong"}."""
    if mode not in ("sequential", "weak", "strong"):
        raise ValueError(f"unknown adversary mode {mode!r}")
    return empirical_stats(adversary_estimates(p, trials, seed)[mode], p.n)


# -- Quantiles ---------------------------------------------------------------------

def quantiles_rank_range(q: QuantilesErrorParams) -> tuple[float, float]:
    """Ranks the returned element may have when ``i`` below and ``j`` above are hidden."""
    m = q.n - (q.i + q.j)
    return (q.phi - q.eps) * m + q.i, (q.phi + q.eps) * m + q.i


def quantiles_range(q: QuantilesErrorParams) -> tuple[float, float]:
    """Rank interval under the weak adversary's worst split of ``r`` omissions."""
    if q.phi <= 0.5:
        center = q.phi * q.n + (1 - q.phi) * q.r
    else:
        center = q.phi * q.n - q.phi * q.r
    half = q.eps * (q.n - q.r)
    return center - half, center + half


def quantiles_relaxation_error_bound(eps: float, r: int) -> float:
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must be in (0, 1), got {eps}")
    return (1 - eps) * r


def quantiles_adversary_worst_split(phi: float, r: int) -> tuple[int, int]:
    if not 0.0 <= phi <= 1.0:
        raise ValueError(f"phi must be in [0, 1], got {phi}")
    return (r, 0) if phi <= 0.5 else (0, r)


def worst_split_bruteforce(phi: float, r: int) -> tuple[tuple[int, int], float]:
    """Exhaustive argmax of the rank shift |(1-phi) i - phi j| over i + j <= r."""
    best, best_dev = (0, 0), -1.0
    for i in range(r + 1):
        for j in range(r + 1 - i):
            dev = abs((1 - phi) * i - phi * j)
            if dev > best_dev + 1e-12:
                best, best_dev = (i, j), dev
    return best, best_dev


# -- CSV rows ------------------------------------------------------------------------

STATS_COLUMNS = ["mode", "n", "k", "r", "mean", "mean_over_n", "variance", "rse",
                 "se_mean", "se_rse", "trials", "rse_bound"]


def stats_row(mode: str, p: ThetaErrorParams, s: EstimatorStats,
              rse_bound: float | None = None) -> dict:
    row = {"mode": mode, **asdict(p), **asdict(s), "mean_over_n": s.mean / p.n,
           "rse_bound": rse_bound}
    return {c: row[c] for c in STATS_COLUMNS}
