"""Decomposition of a queue vector into its component along the all-ones
line and the orthogonal residual, plus the residual-norm moment estimates
used for the collapse diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .model import ParameterError
from .stats import batch_means

# exp() overflow threshold; moments whose per-sample terms exceed it are
# accumulated in log space.
_LOG_MAX = 700.0


@dataclass(frozen=True)
class Decomposition:
    parallel: np.ndarray
    perp: np.ndarray


def decompose(x) -> Decomposition:
    """Split x into its projection on the all-ones line and the residual."""
    v = np.asarray(x, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ParameterError("decompose needs a nonempty 1-d vector")
    parallel = np.full(v.size, v.mean())
    return Decomposition(parallel=parallel, perp=v - parallel)


def p_norm(x, p) -> float:
    """p-norm for p >= 1 (math.inf allowed); p = 2 is the norm used in the
    collapse bounds."""
    if p != math.inf and p < 1:
        raise ParameterError(f"p-norm needs p >= 1, got {p}")
    v = np.asarray(x, dtype=float)
    if p == math.inf:
        return float(np.abs(v).max()) if v.size else 0.0
    return float(np.linalg.norm(v, ord=p))


def perp_norms(samples) -> np.ndarray:
    """Euclidean norm of the orthogonal residual, one value per row."""
    a = np.asarray(samples, dtype=float)
    if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
        raise ParameterError("need a nonempty 2-d array of sample vectors")
    centered = a - a.mean(axis=1, keepdims=True)
    return np.sqrt((centered ** 2).sum(axis=1))


def perp_norms_from_totals(sum_q, sum_q2, n_servers: int) -> np.ndarray:
    """Residual norms from per-slot totals: ||q_perp||^2 = sum q^2 - (sum q)^2 / N."""
    sq = np.asarray(sum_q, dtype=float)
    sq2 = np.asarray(sum_q2, dtype=float)
    return np.sqrt(np.maximum(sq2 - sq * sq / n_servers, 0.0))


def moment_with_stderr(values, r: int, n_batches: int = 20) -> tuple[float, float]:
    """Mean and batch-means stderr of values**r, overflow-safe.

    When r * log(max value) would overflow exp(), the mean is accumulated
    via logsumexp; if even the result is unrepresentable an OverflowError
    is raised (values that large mean the moment itself is out of float
    range, not just an intermediate).
    """
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ParameterError("need at least one value")
    if r < 1:
        raise ParameterError("moment order must be >= 1")
    if np.any(x < 0.0):
        raise ParameterError("moments are defined here for nonnegative values")
    xmax = float(x.max())
    if xmax > 0.0 and r * math.log(xmax) > _LOG_MAX:
        with np.errstate(divide="ignore"):
            logs = r * np.log(x)
        log_mean = float(logsumexp(logs) - math.log(x.size))
        if log_mean > _LOG_MAX:
            raise OverflowError(
                f"E[x^{r}] exceeds float range (log estimate {log_mean:.1f})"
            )
        # work on values/mean (bounded by the sample count), then undo
        scaled_mean, scaled_se = batch_means(np.exp(logs - log_mean), n_batches)
        scale = math.exp(log_mean)
        return scaled_mean * scale, scaled_se * scale
    return batch_means(x ** r, n_batches)


def perp_moment_estimate(samples, r: int, n_batches: int = 20) -> tuple[float, float]:
    """Estimate E[||q_perp||^r] over steady-state sample vectors.

    Returns (estimate, batch-means stderr) with the stderr taken over the
    sample order.
    """
    return moment_with_stderr(perp_norms(samples), r, n_batches)
