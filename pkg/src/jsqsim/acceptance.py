"""The verification suite behind the `verify` subcommand: a desk-scale
sweep plus fixed fixtures, evaluated against the closed-form targets.

Each criterion returns PASS/FAIL with the measured value and its target;
`verify` exits 0 only if all pass. The checks that compare simulation to
asymptotic targets are property-based substitutes for limit statements and
carry explicitly frozen tolerances.
"""

from __future__ import annotations

import filecmp
import logging
import math
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .estimate import merge_replications, oracle_stationary, run_replication
from .model import Policy, SimConfig, debug_run
from .stats import empirical_mgf, loglog_slope, stein_bound_rhs, wasserstein1_to_exp
from .sweep import CellResult, SweepConfig, resolve_workers, run_cell, run_sweep

logger = logging.getLogger("jsqsim")


@dataclass(frozen=True)
class Tolerances:
    """Frozen pass/fail knobs; `quick` loosens them for smoke runs."""

    sigma_mult: float = 3.0          # z-score gate for identity/oracle checks
    scaled_mean_rel: float = 0.20    # largest cell vs the nominal limit 0.5
    monotone_se_mult: float = 1.0    # slack for error monotonicity in N
    w1_largest_max: float = 0.15
    w1_se_mult: float = 1.0          # slack for W1 decrease in N
    mgf_abs_floor: float = 0.05
    perp_slope_range: tuple[float, float] = (0.5, 1.3)
    stein_slope_tol: float = 0.2
    debug_slots: int = 100_000
    fixture_horizon: int = 500_000
    fixture_warmup: int = 20_000
    fixture_reps: int = 4


QUICK_TOLERANCES = Tolerances(
    scaled_mean_rel=0.35,
    monotone_se_mult=2.0,
    w1_largest_max=0.30,
    w1_se_mult=2.0,
    mgf_abs_floor=0.10,
    perp_slope_range=(0.4, 1.6),
    debug_slots=20_000,
    fixture_horizon=50_000,
    fixture_warmup=5_000,
    fixture_reps=2,
)


def default_sweep(seed: int | None = None, quick: bool = False,
                  out_dir: str = "verify_out", workers: int = 0) -> SweepConfig:
    """The built-in desk-scale sweep: N x alpha grid under JSQ with
    sigma_a^2 = sigma_s^2 = 0.5. Horizons are 200x the relaxation heuristic
    (the criteria require >= 100x; the longer run lowers the sampling bias
    of the empirical W1/MGF estimates)."""
    kwargs = dict(
        alpha_list=(2.2, 2.5),
        sigma_a_sq=0.5,
        sigma_s_sq=0.5,
        policies=(Policy.jsq(),),
        output_dir=out_dir,
        workers=workers,
        warmup_mult=10.0,
    )
    if seed is not None:
        kwargs["seed"] = seed
    if quick:
        return SweepConfig(n_list=(4, 8), replications=4, horizon_mult=60.0, **kwargs)
    return SweepConfig(n_list=(4, 8, 16), replications=8, horizon_mult=200.0, **kwargs)


@dataclass
class CriterionResult:
    cid: int
    title: str
    passed: bool
    measured: str
    target: str
    detail: list[str]

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"


def _z(diff: float, se: float) -> float:
    if diff == 0.0:
        return 0.0
    if se == 0.0 or math.isnan(se):
        return math.inf
    return diff / se


def _by_cell(cells: list[CellResult]) -> dict[tuple[int, float], CellResult]:
    return {(c.row.n_servers, c.row.alpha): c for c in cells}


def _bootstrap_w1_se(samples: np.ndarray, n_boot: int, seed_key) -> float:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed_key)))
    n = samples.size
    vals = np.empty(n_boot)
    for b in range(n_boot):
        take = samples[rng.integers(0, n, n)]
        vals[b] = wasserstein1_to_exp(take, float(take.mean()))
    return float(vals.std(ddof=1))


def check_lemma1(cells, tol: Tolerances) -> CriterionResult:
    """C1: the exact unused-service identity E[sum u] = N - lambda."""
    detail, worst = [], 0.0
    ok = True
    for c in cells:
        r = c.row
        z = abs(_z(r.u_rate_est - r.drift_target, r.u_rate_se))
        worst = max(worst, z)
        good = z <= tol.sigma_mult
        ok &= good
        detail.append(
            f"N={r.n_servers} alpha={r.alpha}: u_rate={r.u_rate_est:.6g} "
            f"target={r.drift_target:.6g} |z|={z:.2f}"
        )
    return CriterionResult(
        1, "unused-service identity at every cell", ok,
        f"max |z| = {worst:.2f} over {len(cells)} cells",
        f"|u_rate - N^(1-alpha)| <= {tol.sigma_mult:g} se at every cell", detail,
    )


_FIXTURES = (
    # (label, arrival atoms, sigma_a_sq, sigma_s_sq, lambda, n, q_cap)
    ("N=1 Bernoulli(0.4), deterministic service",
     ((0, 0.6), (1, 0.4)), 0.24, 0.0, 0.4, 1, 50),
    ("N=2 Bernoulli(0.7), three-point service",
     ((0, 0.3), (1, 0.7)), 0.105, 0.5, 0.7, 2, 40),
)


def check_oracle(tol: Tolerances, seed: int) -> CriterionResult:
    """C2: simulator agrees with the exact truncated-chain fixtures."""
    detail = []
    ok = True
    worst = 0.0
    for label, atoms, sig_a, sig_s, lam, n, cap in _FIXTURES:
        cfg = SimConfig(
            n_servers=n, lambda_override=lam, sigma_a_sq=sig_a, sigma_s_sq=sig_s,
            horizon=tol.fixture_horizon, warmup=tol.fixture_warmup, seed=seed,
        )
        arr, svc = cfg.build_dists()  # oracle and simulator share one chain
        assert [v for v, _ in arr.atoms] == [v for v, _ in atoms]
        oracle = oracle_stationary(arr, svc, n, q_cap=cap)
        drift_gap = abs(oracle.e_total_u - (n - lam))
        merged = merge_replications(
            [run_replication(cfg, rep_index=r) for r in range(tol.fixture_reps)]
        )
        zq = abs(_z(merged.mean_total_q.est - oracle.e_total_q,
                    merged.mean_total_q.stderr))
        zu = abs(_z(merged.mean_total_u_per_slot.est - oracle.e_total_u,
                    merged.mean_total_u_per_slot.stderr))
        good = drift_gap <= 1e-9 and zq <= tol.sigma_mult and zu <= tol.sigma_mult
        ok &= good
        worst = max(worst, zq, zu)
        detail.append(
            f"{label}: oracle E[q]={oracle.e_total_q:.6g} E[u]={oracle.e_total_u:.10g} "
            f"(identity gap {drift_gap:.1e}); sim |z_q|={zq:.2f} |z_u|={zu:.2f}"
        )
    return CriterionResult(
        2, "simulator matches the exact tiny-chain oracle", ok,
        f"max sim |z| = {worst:.2f} over {len(_FIXTURES)} fixtures",
        f"oracle identity gap <= 1e-9 and sim within {tol.sigma_mult:g} se", detail,
    )


def check_scaled_mean(cells, tol: Tolerances, alpha_list, n_list) -> CriterionResult:
    """C3: scaled total queue mean approaches the heavy-traffic limit.

    Largest cell must land within scaled_mean_rel of the nominal 0.5; the
    absolute error against each cell's achieved limit must be non-increasing
    in N (within monotone_se_mult pooled stderr) for each alpha.
    """
    by = _by_cell(cells)
    detail, ok = [], True
    n_max, a_max = max(n_list), max(alpha_list)
    top = by[(n_max, a_max)].row
    gate = abs(top.scaled_mean_est - 0.5) <= tol.scaled_mean_rel * 0.5
    ok &= gate
    detail.append(
        f"largest cell (N={n_max}, alpha={a_max}): scaled mean "
        f"{top.scaled_mean_est:.4f} vs 0.5 "
        f"({abs(top.scaled_mean_est - 0.5) / 0.5:.1%} off; gate "
        f"{tol.scaled_mean_rel:.0%}) -> {'ok' if gate else 'FAIL'}"
    )
    for alpha in alpha_list:
        errs, ses = [], []
        for n in n_list:
            r = by[(n, alpha)].row
            errs.append(abs(r.scaled_mean_est - r.limit_mean_target))
            ses.append(r.scaled_mean_se)
        for k in range(len(errs) - 1):
            slack = tol.monotone_se_mult * math.hypot(ses[k], ses[k + 1])
            good = errs[k + 1] <= errs[k] + slack
            ok &= good
            detail.append(
                f"alpha={alpha}: |err| N={n_list[k]}->{n_list[k + 1]}: "
                f"{errs[k]:.4f} -> {errs[k + 1]:.4f} (slack {slack:.4f}) "
                f"-> {'ok' if good else 'FAIL'}"
            )
    return CriterionResult(
        3, "scaled mean trend toward (sigma_a^2+sigma_s^2)/2", ok,
        f"largest cell scaled mean = {top.scaled_mean_est:.4f}",
        f"within {tol.scaled_mean_rel:.0%} of 0.5; error non-increasing in N",
        detail,
    )


def check_w1_decay(cells, tol: Tolerances, alpha_list, n_list, seed) -> CriterionResult:
    """C4: W1 distance of the unit-mean-rescaled samples to Exp(1) decreases
    in N per alpha and is below w1_largest_max at the largest cell."""
    by = _by_cell(cells)
    detail, ok = [], True
    w1 = {}
    se = {}
    for (n, alpha), c in by.items():
        s = c.summary.scaled_samples
        w1[(n, alpha)] = wasserstein1_to_exp(s, float(s.mean()))
        se[(n, alpha)] = _bootstrap_w1_se(
            s, n_boot=100, seed_key=(seed, n, round(alpha * 1000), 0xB001)
        )
    for alpha in alpha_list:
        for k in range(len(n_list) - 1):
            lo, hi = n_list[k], n_list[k + 1]
            slack = tol.w1_se_mult * math.hypot(se[(lo, alpha)], se[(hi, alpha)])
            good = w1[(hi, alpha)] < w1[(lo, alpha)] + slack
            ok &= good
            detail.append(
                f"alpha={alpha}: W1 N={lo}->{hi}: {w1[(lo, alpha)]:.4f} -> "
                f"{w1[(hi, alpha)]:.4f} (slack {slack:.4f}) -> {'ok' if good else 'FAIL'}"
            )
    n_max, a_max = max(n_list), max(alpha_list)
    top = w1[(n_max, a_max)]
    gate = top < tol.w1_largest_max
    ok &= gate
    detail.append(
        f"largest cell W1 = {top:.4f} (< {tol.w1_largest_max}) -> "
        f"{'ok' if gate else 'FAIL'}"
    )
    return CriterionResult(
        4, "Wasserstein-1 to the exponential decays in N", ok,
        f"largest cell W1 = {top:.4f}",
        f"decreasing in N per alpha; < {tol.w1_largest_max} at the largest cell",
        detail,
    )


def check_mgf(cells, tol: Tolerances, alpha_list, n_list) -> CriterionResult:
    """C5: empirical MGF of the unit-mean rescaling matches 1/(1-theta) on
    the 21-point grid at the largest cell."""
    by = _by_cell(cells)
    n_max, a_max = max(n_list), max(alpha_list)
    samples = by[(n_max, a_max)].summary.scaled_samples
    detail, ok = [], True
    worst = 0.0
    for theta, est, sev in empirical_mgf(samples):
        if math.isnan(est):
            detail.append(f"theta={theta:+.2f}: saturated, excluded")
            continue
        target = 1.0 / (1.0 - theta)
        gap = abs(est - target)
        allowed = max(tol.sigma_mult * sev, tol.mgf_abs_floor)
        good = gap <= allowed
        ok &= good
        worst = max(worst, gap - allowed)
        if not good or abs(theta) >= 0.45:
            detail.append(
                f"theta={theta:+.2f}: est={est:.4f} target={target:.4f} "
                f"|gap|={gap:.4f} allowed={allowed:.4f} -> {'ok' if good else 'FAIL'}"
            )
    return CriterionResult(
        5, "MGF matches 1/(1-theta) at the largest cell", ok,
        f"worst excess over allowance = {worst:+.4f}",
        f"|est - 1/(1-theta)| <= max({tol.sigma_mult:g} se, {tol.mgf_abs_floor}) "
        "at every non-saturated point",
        detail,
    )


def check_perp_slope(cells, tol: Tolerances) -> CriterionResult:
    """C6: growth exponent of E||q_perp|| vs N over the sweep (pooled alpha)."""
    pts = [(c.row.n_servers, c.row.perp_norm_est) for c in cells]
    slope, _, r_sq = loglog_slope(pts)
    lo, hi = tol.perp_slope_range
    ok = lo <= slope <= hi
    detail = [
        f"N={n}: E||q_perp|| = {v:.4f}" for n, v in sorted(pts)
    ] + [f"pooled log-log slope = {slope:.3f} (r^2 = {r_sq:.3f})"]
    return CriterionResult(
        6, "state-space-collapse growth exponent", ok,
        f"slope = {slope:.3f}", f"slope in [{lo}, {hi}]", detail,
    )


def check_stein_shape(tol: Tolerances) -> CriterionResult:
    """C7: the closed-form bound decays at the predicted order in N."""
    alpha, sigma_sum, s_max = 2.5, 1.0, 2.0
    grid = [10 ** k for k in range(2, 7)]
    vals = [stein_bound_rhs(n, alpha, sigma_sum, s_max, c=1.0) for n in grid]
    tail_decreasing = all(
        vals[i + 1] < vals[i] for i in range(1, len(vals) - 1)
    )
    slope, _, _ = loglog_slope(list(zip(grid, vals)))
    slope_ok = abs(slope - (2.0 - alpha)) <= tol.stein_slope_tol
    ok = tail_decreasing and slope_ok
    detail = [f"N={n:g}: rhs={v:.5g}" for n, v in zip(grid, vals)] + [
        f"slope = {slope:.3f} vs 2 - alpha = {2 - alpha:.1f} "
        f"(tol {tol.stein_slope_tol}); tail decreasing: {tail_decreasing}"
    ]
    return CriterionResult(
        7, "rate-bound formula decays at order 2 - alpha", ok,
        f"slope = {slope:.3f}, tail decreasing = {tail_decreasing}",
        f"|slope - (2 - alpha)| <= {tol.stein_slope_tol}; decreasing for N >= 1e3",
        detail,
    )


def check_step_invariants(tol: Tolerances, seed: int) -> CriterionResult:
    """C8: per-slot invariants hold on every slot of a debug run."""
    cfg = SimConfig(n_servers=8, alpha=2.2, seed=seed).resolved()
    result = debug_run(cfg, tol.debug_slots)
    ok = not result.violations
    detail = result.violations or [
        f"{result.n_slots} slots at (N=8, alpha=2.2): 0 violations"
    ]
    return CriterionResult(
        8, "per-slot dynamics invariants", ok,
        f"{len(result.violations)} violations in {result.n_slots} slots",
        "zero violations", detail,
    )


def check_jsq_dominance(sweep: SweepConfig, tol: Tolerances) -> CriterionResult:
    """C9: JSQ beats uniform-random routing on mean total queue length."""
    workers = resolve_workers(sweep.workers, sweep.replications)
    results = {}
    for policy in (Policy.jsq(), Policy.random()):
        cfg = sweep.cell_config(8, 2.2, policy)
        results[policy.kind] = run_cell(cfg, sweep.estimator_spec(cfg), workers)
    jsq, rnd = results["jsq"], results["random"]
    sep = rnd.mean_total_q.est - jsq.mean_total_q.est
    need = tol.sigma_mult * math.hypot(jsq.mean_total_q.stderr, rnd.mean_total_q.stderr)
    ok = sep > need
    detail = [
        f"E[sum q] jsq = {jsq.mean_total_q.est:.2f} +- {jsq.mean_total_q.stderr:.2f}",
        f"E[sum q] random = {rnd.mean_total_q.est:.2f} +- {rnd.mean_total_q.stderr:.2f}",
        f"separation = {sep:.2f}, needed > {need:.2f}",
    ]
    return CriterionResult(
        9, "JSQ dominates random routing at (N=8, alpha=2.2)", ok,
        f"separation = {sep:.1f} (needed > {need:.1f})",
        f"jsq mean below random by more than {tol.sigma_mult:g} pooled se", detail,
    )


def check_determinism(sweep: SweepConfig, out_dir: Path) -> CriterionResult:
    """C10: rerunning the full sweep with the same seed reproduces
    results.csv byte for byte."""
    rerun_dir = out_dir / "rerun"
    run_sweep(sweep, out_dir=rerun_dir)
    first = out_dir / "results.csv"
    second = rerun_dir / "results.csv"
    same = filecmp.cmp(first, second, shallow=False)
    return CriterionResult(
        10, "byte-identical results.csv on rerun", same,
        "identical" if same else "files differ",
        "byte-identical results.csv for the same (config, seed)",
        [f"compared {first} vs {second}"],
    )


def run_verify(
    sweep: SweepConfig | None = None,
    quick: bool = False,
    seed: int | None = None,
    workers: int = 0,
    out_dir: str = "verify_out",
) -> list[CriterionResult]:
    """Run the whole verification suite; returns per-criterion results."""
    tol = QUICK_TOLERANCES if quick else Tolerances()
    if sweep is None:
        sweep = default_sweep(seed=seed, quick=quick, out_dir=out_dir, workers=workers)
    else:
        overrides = {"output_dir": out_dir}
        if seed is not None:
            overrides["seed"] = seed
        if workers:
            overrides["workers"] = workers
        sweep = replace(sweep, **overrides)
    out = Path(sweep.output_dir)
    t0 = time.perf_counter()
    cells = run_sweep(sweep)
    bad = [c.row.status for c in cells if c.row.status != "ok"]
    if bad:
        raise RuntimeError(f"verification sweep had failing cells: {bad}")
    logger.info("main sweep finished in %.1fs", time.perf_counter() - t0)

    results = [
        check_lemma1(cells, tol),
        check_oracle(tol, sweep.seed),
        check_scaled_mean(cells, tol, sweep.alpha_list, sweep.n_list),
        check_w1_decay(cells, tol, sweep.alpha_list, sweep.n_list, sweep.seed),
        check_mgf(cells, tol, sweep.alpha_list, sweep.n_list),
        check_perp_slope(cells, tol),
        check_stein_shape(tol),
        check_step_invariants(tol, sweep.seed),
        check_jsq_dominance(sweep, tol),
        check_determinism(sweep, out),
    ]
    return results


def print_report(results: list[CriterionResult], verbose: bool = True,
                 file=None) -> None:
    file = file or sys.stdout
    width = max(len(r.title) for r in results)
    for r in results:
        print(f"C{r.cid:02d} {r.verdict:4s} {r.title:<{width}}  "
              f"measured: {r.measured}  |  target: {r.target}", file=file)
        if verbose and (not r.passed):
            for line in r.detail:
                print(f"         - {line}", file=file)
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} criteria passed", file=file)
