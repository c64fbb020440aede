"""Steady-state Monte Carlo estimation: warm-up handling, thinned sampling,
batch-means errors, replication merging, and an exact power-iteration
oracle for tiny systems."""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse

from .model import (
    CHUNK_SLOTS,
    DiscreteDist,
    ParameterError,
    Policy,
    SimConfig,
    replication_rng,
    simulate_chunk,
)
from .projection import moment_with_stderr, perp_norms_from_totals
from .stats import batch_means


class MergeError(ValueError):
    """Replication summaries disagree on their configuration."""


class OracleError(RuntimeError):
    """The exact stationary computation failed to converge."""


class MixingWarning(UserWarning):
    """Horizon is short relative to the relaxation-time heuristic."""


class TruncationWarning(UserWarning):
    """The truncated state space carries non-negligible boundary mass."""


@dataclass(frozen=True)
class EstimatorSpec:
    """Sampling schedule for steady-state estimation.

    Thinned q-statistics start at ``warmup`` and step by ``sample_every``;
    the unused-service rate averages every post-warm-up slot. Series are
    front-truncated so ``n_batches`` divides the retained length.
    """

    warmup: int
    sample_every: int
    n_batches: int = 20
    retain_scaled_totals: bool = True
    retain_cap: int = 200_000
    perp_orders: tuple[int, ...] = (1, 2)

    def __post_init__(self):
        if self.warmup < 0:
            raise ParameterError("warmup must be nonnegative")
        if self.sample_every < 1:
            raise ParameterError("sample_every must be >= 1")
        if self.n_batches < 10:
            raise ParameterError("n_batches must be >= 10")
        if self.retain_cap < 0:
            raise ParameterError("retain_cap must be nonnegative")
        if any(r < 1 for r in self.perp_orders):
            raise ParameterError("perp moment orders must be >= 1")


def default_estimator_spec(cfg: SimConfig) -> EstimatorSpec:
    """Defaults tied to the relaxation-time heuristic: thinning at
    t_relax/100 keeps retained samples usable for distributional tests."""
    cfg = cfg.resolved()
    return EstimatorSpec(
        warmup=cfg.warmup,
        sample_every=max(1, round(cfg.t_relax / 100.0)),
    )


@dataclass(frozen=True)
class Estimate:
    est: float
    stderr: float

    def __post_init__(self):
        if not math.isnan(self.stderr) and self.stderr < 0:
            raise ParameterError("stderr must be nonnegative")


@dataclass
class RunSummary:
    """Steady-state estimates from one replication (or a merge of several)."""

    mean_total_q: Estimate
    mean_total_u_per_slot: Estimate
    scaled_mean: Estimate
    perp_moments: dict[int, Estimate]
    scaled_samples: np.ndarray
    achieved_sigma_a_sq: float
    config_echo: SimConfig
    rep_index: int
    n_samples: int
    n_slots: int
    retain_cap: int


def run_replication(
    cfg: SimConfig,
    spec: EstimatorSpec | None = None,
    rep_index: int = 0,
) -> RunSummary:
    """Simulate one replication from the empty state and summarize it.

    The unused-service rate is averaged over ALL post-warm-up slots (it is
    an exact per-slot identity in steady state); queue statistics use the
    thinned sample schedule.
    """
    cfg = cfg.resolved()
    if spec is None:
        spec = default_estimator_spec(cfg)
    if cfg.horizon < 20.0 * cfg.t_relax:
        warnings.warn(
            f"horizon {cfg.horizon} < 20 * t_relax ({cfg.t_relax:.3g}); "
            "steady-state estimates may carry warm-up bias",
            MixingWarning,
            stacklevel=2,
        )
    arr, svc = cfg.build_dists()
    horizon, warmup = cfg.horizon, spec.warmup
    if not warmup < horizon:
        raise ParameterError("estimator warmup must be below the horizon")
    n_post = horizon - warmup
    n_b = spec.n_batches
    if n_post < n_b:
        raise ParameterError("horizon leaves fewer post-warm-up slots than batches")

    # per-slot unused-service batch layout (front-truncated)
    b_u = n_post // n_b
    u_batch_start = horizon - n_b * b_u
    u_batch_sums = np.zeros(n_b)
    total_u = 0

    rng = replication_rng(cfg.seed, rep_index)
    q = np.zeros(cfg.n_servers, dtype=np.int64)
    q_totals: list[np.ndarray] = []
    q2_totals: list[np.ndarray] = []

    t0 = 0
    while t0 < horizon:
        m = min(CHUNK_SLOTS, horizon - t0)
        sum_q, sum_u, sum_q2 = simulate_chunk(rng, q, m, arr, svc, cfg.policy)
        lo = max(warmup - t0, 0)
        if lo < m:
            abs_idx = np.arange(t0 + lo, t0 + m)
            seg_u = sum_u[lo:]
            total_u += int(seg_u.sum())
            in_batches = abs_idx >= u_batch_start
            if in_batches.any():
                bidx = (abs_idx[in_batches] - u_batch_start) // b_u
                u_batch_sums += np.bincount(
                    bidx, weights=seg_u[in_batches], minlength=n_b
                )
            thin = (abs_idx - warmup) % spec.sample_every == 0
            q_totals.append(sum_q[lo:][thin])
            q2_totals.append(sum_q2[lo:][thin])
        t0 += m

    q_series = np.concatenate(q_totals).astype(float)
    q2_series = np.concatenate(q2_totals).astype(float)
    n_samples = q_series.size

    u_est = total_u / n_post
    u_means = u_batch_sums / b_u
    u_se = float(u_means.std(ddof=1) / math.sqrt(n_b)) if n_b > 1 else math.nan

    q_est, q_se = batch_means(q_series, n_b)
    scale = cfg.scale_factor
    perp = {
        int(r): Estimate(*moment_with_stderr(
            perp_norms_from_totals(q_series, q2_series, cfg.n_servers), int(r), n_b
        ))
        for r in spec.perp_orders
    }
    if spec.retain_scaled_totals:
        retained = scale * q_series[: spec.retain_cap]
    else:
        retained = np.empty(0)

    return RunSummary(
        mean_total_q=Estimate(q_est, q_se),
        mean_total_u_per_slot=Estimate(u_est, u_se),
        scaled_mean=Estimate(scale * q_est, scale * q_se),
        perp_moments=perp,
        scaled_samples=retained,
        achieved_sigma_a_sq=cfg.achieved_sigma_a_sq,
        config_echo=cfg,
        rep_index=rep_index,
        n_samples=n_samples,
        n_slots=n_post,
        retain_cap=spec.retain_cap,
    )


def _pool(pairs: list[tuple[Estimate, int]]) -> Estimate:
    """Pool replication estimates: count-weighted mean, between-replication
    variance for the error bar. With equal counts this reduces to the
    classic stderr of the replication means."""
    w = np.array([c for _, c in pairs], dtype=float)
    m = np.array([e.est for e, _ in pairs])
    total = w.sum()
    est = float((w * m).sum() / total)
    r = len(pairs)
    var = float((w * (m - est) ** 2).sum() / (total * (r - 1)))
    return Estimate(est, math.sqrt(var))


def merge_replications(summaries: list[RunSummary]) -> RunSummary:
    """Combine per-replication summaries sharing one configuration."""
    if not summaries:
        raise MergeError("nothing to merge")
    if len(summaries) == 1:
        return summaries[0]
    base = summaries[0]
    for s in summaries[1:]:
        if s.config_echo != base.config_echo:
            raise MergeError("summaries come from different configurations")
        if set(s.perp_moments) != set(base.perp_moments):
            raise MergeError("summaries carry different perp moment orders")
    cap = min(s.retain_cap for s in summaries)
    merged_samples = np.concatenate([s.scaled_samples for s in summaries])[:cap]
    return RunSummary(
        mean_total_q=_pool([(s.mean_total_q, s.n_samples) for s in summaries]),
        mean_total_u_per_slot=_pool(
            [(s.mean_total_u_per_slot, s.n_slots) for s in summaries]
        ),
        scaled_mean=_pool([(s.scaled_mean, s.n_samples) for s in summaries]),
        perp_moments={
            r: _pool([(s.perp_moments[r], s.n_samples) for s in summaries])
            for r in base.perp_moments
        },
        scaled_samples=merged_samples,
        achieved_sigma_a_sq=base.achieved_sigma_a_sq,
        config_echo=base.config_echo,
        rep_index=-1,
        n_samples=sum(s.n_samples for s in summaries),
        n_slots=sum(s.n_slots for s in summaries),
        retain_cap=cap,
    )


@dataclass
class OracleResult:
    """Exact stationary quantities of the truncated chain."""

    e_total_q: float
    e_total_u: float
    total_q_dist: np.ndarray
    pi: np.ndarray
    boundary_mass: float
    n_iterations: int


def _route_branches(q: tuple[int, ...], policy: Policy) -> list[tuple[int, float]]:
    if policy.kind == "jsq":
        qmin = min(q)
        ties = [i for i, v in enumerate(q) if v == qmin]
        p = 1.0 / len(ties)
        return [(i, p) for i in ties]
    if policy.kind == "random":
        p = 1.0 / len(q)
        return [(i, p) for i in range(len(q))]
    raise ParameterError("the oracle supports jsq and random routing only")


def oracle_stationary(
    arr: DiscreteDist,
    svc: DiscreteDist,
    n_servers: int,
    q_cap: int,
    policy: Policy = Policy.jsq(),
    tol: float = 1e-12,
    max_iterations: int = 1_000_000,
) -> OracleResult:
    """Exact stationary distribution of the chain truncated at q_cap.

    Builds the one-slot kernel by exhaustive enumeration of arrival,
    tie-break, and service outcomes, clips excess arrivals at the cap
    (keeping the kernel stochastic), and power-iterates the distribution
    to an L1 fixed point. Emits a TruncationWarning when the boundary mass
    exceeds 1e-8.
    """
    n_states = (q_cap + 1) ** n_servers
    if n_states > 10 ** 6:
        raise ParameterError(
            f"truncated state space has {n_states} states (> 1e6); lower q_cap"
        )

    radix = np.array(
        [(q_cap + 1) ** (n_servers - 1 - i) for i in range(n_servers)], dtype=np.int64
    )
    svc_combos = [
        (np.array(vals, dtype=np.int64), math.prod(ps))
        for vals, ps in (
            (tuple(v for v, _ in combo), tuple(p for _, p in combo))
            for combo in itertools.product(svc.atoms, repeat=n_servers)
        )
    ]

    rows: list[int] = []
    cols: list[int] = []
    data: list[float] = []
    e_u_cond = np.zeros(n_states)
    for state in itertools.product(range(q_cap + 1), repeat=n_servers):
        idx = int(np.dot(state, radix))
        qv = np.array(state, dtype=np.int64)
        for i_star, p_route in _route_branches(state, policy):
            for a_val, p_a in arr.atoms:
                arrived = qv.copy()
                arrived[i_star] += a_val
                for s_vals, p_s in svc_combos:
                    p = p_route * p_a * p_s
                    net = arrived - s_vals
                    q_next = np.maximum(net, 0)
                    u_sum = int((q_next - net).sum())
                    q_next = np.minimum(q_next, q_cap)  # clip excess at the cap
                    rows.append(idx)
                    cols.append(int(np.dot(q_next, radix)))
                    data.append(p)
                    e_u_cond[idx] += p * u_sum

    kernel_t = scipy.sparse.csr_matrix(
        (data, (cols, rows)), shape=(n_states, n_states)
    )
    pi = np.zeros(n_states)
    pi[0] = 1.0
    for iteration in range(1, max_iterations + 1):
        pi_next = kernel_t @ pi
        pi_next /= pi_next.sum()
        delta = float(np.abs(pi_next - pi).sum())
        pi = pi_next
        if delta < tol:
            break
    else:
        raise OracleError(
            f"power iteration did not reach L1 change < {tol} in {max_iterations} steps"
        )

    states = np.array(
        list(itertools.product(range(q_cap + 1), repeat=n_servers)), dtype=np.int64
    )
    totals = states.sum(axis=1)
    e_total_q = float(pi @ totals)
    e_total_u = float(pi @ e_u_cond)
    total_q_dist = np.bincount(totals, weights=pi, minlength=n_servers * q_cap + 1)
    boundary = float(pi[(states == q_cap).any(axis=1)].sum())
    if boundary > 1e-8:
        warnings.warn(
            f"truncation boundary mass {boundary:.3g} > 1e-8; raise q_cap",
            TruncationWarning,
            stacklevel=2,
        )
    return OracleResult(
        e_total_q=e_total_q,
        e_total_u=e_total_u,
        total_q_dist=total_q_dist,
        pi=pi,
        boundary_mass=boundary,
        n_iterations=iteration,
    )
