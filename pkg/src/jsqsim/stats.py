"""Verification mathematics: empirical Wasserstein-1 distance to the
exponential law, empirical MGF, the closed-form convergence-rate bound,
scaling-law regression, and QQ data.

All sample-based estimators here are pure functions of immutable inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Default MGF evaluation grid: 21 points, well inside the unit-mean
# exponential's domain of finiteness (theta < 1).
THETA_GRID = tuple(np.linspace(-0.5, 0.5, 21))

# exp(1/(2e) + 1), the factor attached to the scaled-collapse constant in
# the convergence-rate bound.
_CBAR_FACTOR = math.exp(1.0 / (2.0 * math.e) + 1.0)


def batch_means(values, n_batches: int = 20) -> tuple[float, float]:
    """Mean and batch-means standard error of a (possibly correlated) series.

    The series is truncated at the front so n_batches divides its length.
    Falls back to the iid stderr when there are fewer than 2 observations
    per batch, and to (value, nan) for a single observation.
    """
    x = np.asarray(values, dtype=float)
    n = x.size
    if n_batches < 1:
        raise ValueError("n_batches must be >= 1")
    if n == 0:
        return math.nan, math.nan
    if n == 1:
        return float(x[0]), math.nan
    if n < 2 * n_batches:
        return float(x.mean()), float(x.std(ddof=1) / math.sqrt(n))
    b = n // n_batches
    x = x[n - n_batches * b:]
    means = x.reshape(n_batches, b).mean(axis=1)
    return float(x.mean()), float(means.std(ddof=1) / math.sqrt(n_batches))


def wasserstein1_to_exp(samples, mean: float) -> float:
    """Exact W1 between the empirical law of samples/mean and Exp(1).

    Evaluates the CDF-difference integral in closed form piece by piece
    between order statistics: on each piece the integrand is
    |k/n - 1 + e^(-t)|, which is integrated analytically, splitting at the
    interior root t = -ln(1 - k/n) when it falls inside the piece.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("samples must be nonempty")
    if mean <= 0.0:
        raise ValueError("mean must be positive")
    if np.any(x < 0.0):
        raise ValueError("samples must be nonnegative")
    y = np.sort(x) / mean
    n = y.size

    # Pieces [a_k, b_k) for k = 0..n-1 where the empirical CDF is k/n,
    # then the tail [y_max, inf) where it is 1.
    a = np.concatenate(([0.0], y[:-1]))
    b = y
    c = 1.0 - np.arange(0, n) / n  # e^(-t) crosses c at t* = -ln c

    ea = np.exp(-a)
    eb = np.exp(-b)
    no_split = np.abs((ea - eb) - c * (b - a))
    t_star = -np.log(c)
    inside = (t_star > a) & (t_star < b)
    # both halves are nonnegative by construction of the split point
    left = (ea - c) - c * (t_star - a)
    right = c * (b - t_star) - (c - eb)
    split = left + right
    total = float(np.where(inside, split, no_split).sum())
    total += float(np.exp(-y[-1]))  # tail: integral of e^(-t)
    return total


def empirical_mgf(
    samples,
    theta_grid=None,
    n_batches: int = 20,
) -> list[tuple[float, float, float]]:
    """Empirical MGF of samples rescaled to unit mean, on a theta grid.

    Returns (theta, estimate, stderr) triples; the stderr is a batch-means
    error over the sample order. A grid point with theta * max(sample)
    above the exp overflow threshold is reported as (theta, nan, nan) and
    must be excluded from comparisons. For exponential-shaped data the
    target is 1/(1-theta).
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("samples must be nonempty")
    grid = THETA_GRID if theta_grid is None else tuple(theta_grid)
    if any(t >= 1.0 for t in grid):
        raise ValueError("theta grid must stay below 1 (finite target)")
    mu = float(x.mean())
    if mu <= 0.0:
        raise ValueError("samples must have positive mean for unit rescaling")
    z = x / mu
    zmax = float(z.max())
    out = []
    for theta in grid:
        if theta * zmax > 700.0:
            out.append((float(theta), math.nan, math.nan))
            continue
        est, se = batch_means(np.exp(theta * z), n_batches)
        out.append((float(theta), est, se))
    return out


def _ceil_exact(x: float) -> int:
    # ceil intended over exact reals; guard against float fuzz pushing an
    # integer-valued argument up a step.
    return math.ceil(x - 1e-12)


def stein_bound_rhs(
    n_servers: float,
    alpha: float,
    sigma_sum_sq: float,
    s_max: float,
    c: float = 1.0,
) -> float:
    """Closed-form upper bound on W1 between the scaled total queue length
    and the unit-mean exponential:

        (5 s_max N^(1-a) + N^(1-2a) + 2 Cbar ceil(a-1) N^(2-a) ceil(ln N))
            / sigma_sum_sq,   Cbar = c * s_max * e^(1/(2e)+1).

    Logarithms are natural. The collapse constant c is not pinned by the
    theory; callers must report the bound separately from empirical W1.
    """
    if n_servers <= 0 or alpha <= 0 or sigma_sum_sq <= 0 or s_max <= 0 or c <= 0:
        raise ValueError("all stein_bound_rhs parameters must be positive")
    n = float(n_servers)
    cbar = c * s_max * _CBAR_FACTOR
    term1 = 5.0 * s_max * n ** (1.0 - alpha)
    term2 = n ** (1.0 - 2.0 * alpha)
    term3 = (
        2.0 * cbar * _ceil_exact(alpha - 1.0) * n ** (2.0 - alpha)
        * _ceil_exact(math.log(n))
    )
    return (term1 + term2 + term3) / sigma_sum_sq


def k_r_bound(r: int, c: float) -> float:
    """Moment-scaling constant K(r) = c^r r^(r+1/2) e^(1-r)."""
    if r < 1:
        raise ValueError("r must be >= 1")
    return c ** r * float(r) ** (r + 0.5) * math.exp(1.0 - r)


@dataclass(frozen=True)
class TheoryTargets:
    """Closed-form reference values for one (N, alpha) system.

    limit_mean uses the ACHIEVED per-server arrival variance, never the
    requested one.
    """

    limit_mean: float
    drift: float
    stein_rhs: float
    k_r: dict[int, float]

    def __post_init__(self):
        if self.drift <= 0.0:
            raise ValueError("drift must be positive")
        if self.limit_mean <= 0.0:
            raise ValueError("limit_mean must be positive when a variance is positive")


def theory_targets(
    n_servers: int,
    alpha: float,
    sigma_hat_a_sq: float,
    sigma_s_sq: float,
    s_max: float,
    c: float = 1.0,
    r_values=(1, 2),
) -> TheoryTargets:
    sigma_sum_sq = sigma_hat_a_sq + sigma_s_sq
    return TheoryTargets(
        limit_mean=sigma_sum_sq / 2.0,
        drift=float(n_servers) ** (1.0 - alpha),
        stein_rhs=stein_bound_rhs(n_servers, alpha, sigma_sum_sq, s_max, c),
        k_r={int(r): k_r_bound(int(r), c) for r in r_values},
    )


def loglog_slope(points) -> tuple[float, float, float]:
    """OLS fit of log(value) against log(N): (slope, intercept, r_squared)."""
    pts = [(float(n), float(v)) for n, v in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    if any(n <= 0 or v <= 0 for n, v in pts):
        raise ValueError("log-log regression needs positive points")
    x = np.log([n for n, _ in pts])
    y = np.log([v for _, v in pts])
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    if sxx == 0.0:
        raise ValueError("all N values identical")
    slope = float(xc @ yc) / sxx
    intercept = float(y.mean() - slope * x.mean())
    ss_res = float(((yc - slope * xc) ** 2).sum())
    ss_tot = float(yc @ yc)
    r_sq = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return slope, intercept, r_sq


def exp_qq_data(samples) -> np.ndarray:
    """QQ pairs against the exponential with the sample's own mean.

    Row k holds (-ln(1 - (k - 1/2)/n) * mean, k-th order statistic).
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("samples must be nonempty")
    n = x.size
    k = np.arange(1, n + 1)
    theo = -np.log1p(-(k - 0.5) / n) * x.mean()
    return np.column_stack((theo, np.sort(x)))
