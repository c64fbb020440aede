"""Sweep orchestration: TOML config ingestion, (N, alpha, policy) grids,
replication scheduling, and CSV/JSON report emission.

The results.csv layout is deterministic for a fixed (config, seed): wall
clock time lives only in results.json so identical runs produce identical
CSV bytes regardless of worker count.
"""

from __future__ import annotations

import concurrent.futures
import csv
import difflib
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .estimate import EstimatorSpec, RunSummary, merge_replications, run_replication
from .model import DEFAULT_SEED, ParameterError, Policy, SimConfig
from .stats import THETA_GRID, empirical_mgf, exp_qq_data, stein_bound_rhs, wasserstein1_to_exp

logger = logging.getLogger("jsqsim")

WORKERS_ENV_VAR = "JSQSIM_WORKERS"


class ConfigError(ValueError):
    """Sweep configuration file problem (named key or line in message)."""


@dataclass(frozen=True)
class SweepConfig:
    """One experiment grid; every (N, alpha, policy) triple is a cell."""

    n_list: tuple[int, ...]
    alpha_list: tuple[float, ...]
    policies: tuple[Policy, ...] = (Policy.jsq(),)
    replications: int = 8
    sigma_a_sq: float = 0.5
    sigma_s_sq: float = 0.5
    horizon: int | None = None
    warmup: int | None = None
    horizon_mult: float = 100.0
    warmup_mult: float = 10.0
    sample_every: int | None = None
    n_batches: int = 20
    retain_scaled_totals: bool = True
    retain_cap: int = 200_000
    seed: int = DEFAULT_SEED
    workers: int = 0
    stein_c: float = 1.0
    output_dir: str = "out"
    formats: tuple[str, ...] = ("csv", "json")

    def __post_init__(self):
        if not self.n_list or not self.alpha_list or not self.policies:
            raise ConfigError("n_list, alpha_list and policies must be nonempty")
        if any(n < 1 for n in self.n_list):
            raise ConfigError("n_list entries must be positive")
        if any(a <= 0 for a in self.alpha_list):
            raise ConfigError("alpha_list entries must be positive")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        bad = set(self.formats) - {"csv", "json"}
        if bad:
            raise ConfigError(f"unknown formats {sorted(bad)}; choose from csv, json")
        if self.horizon_mult <= 0 or self.warmup_mult < 0:
            raise ConfigError("horizon_mult must be positive, warmup_mult nonnegative")

    def cell_config(self, n: int, alpha: float, policy: Policy) -> SimConfig:
        cfg = SimConfig(
            n_servers=n,
            alpha=alpha,
            sigma_a_sq=self.sigma_a_sq,
            sigma_s_sq=self.sigma_s_sq,
            policy=policy,
            horizon=self.horizon,
            warmup=self.warmup,
            seed=self.seed,
            replications=self.replications,
        )
        if self.horizon is None:
            horizon = max(1000, math.ceil(self.horizon_mult * cfg.t_relax))
            warmup = self.warmup
            if warmup is None:
                warmup = min(max(100, math.ceil(self.warmup_mult * cfg.t_relax)),
                             horizon - 1)
            cfg = replace(cfg, horizon=horizon, warmup=warmup)
        return cfg.resolved()

    def cells(self) -> list[SimConfig]:
        return [
            self.cell_config(n, a, p)
            for n in self.n_list
            for a in self.alpha_list
            for p in self.policies
        ]

    def estimator_spec(self, cfg: SimConfig) -> EstimatorSpec:
        return EstimatorSpec(
            warmup=cfg.warmup,
            sample_every=self.sample_every or max(1, round(cfg.t_relax / 100.0)),
            n_batches=self.n_batches,
            retain_scaled_totals=self.retain_scaled_totals,
            retain_cap=self.retain_cap,
        )


# TOML schema: key -> (python type, default, help). Types are checked
# strictly (bools are not accepted for ints).
CONFIG_SCHEMA: dict[str, tuple[type, object, str]] = {
    "n_list": (list, None, "server counts N (required)"),
    "alpha_list": (list, None, "heavy-traffic exponents alpha (required)"),
    "policies": (list, ["jsq"], "routing policies: 'jsq', 'random', 'jsq(d)'"),
    "replications": (int, 8, "independent replications per cell"),
    "sigma_a_sq": (float, 0.5, "requested per-server arrival variance factor"),
    "sigma_s_sq": (float, 0.5, "service variance (in [0, 1])"),
    "horizon": (int, 0, "slots per replication; 0 = horizon_mult * t_relax"),
    "warmup": (int, 0, "discarded slots; 0 = warmup_mult * t_relax"),
    "horizon_mult": (float, 100.0, "auto horizon multiplier"),
    "warmup_mult": (float, 10.0, "auto warmup multiplier"),
    "sample_every": (int, 0, "thinning interval; 0 = t_relax / 100"),
    "n_batches": (int, 20, "batch count for batch-means errors (>= 10)"),
    "retain_scaled_totals": (bool, True, "keep scaled totals for W1/MGF/QQ"),
    "retain_cap": (int, 200_000, "max retained samples per cell"),
    "seed": (int, DEFAULT_SEED, "root seed (replication r uses (seed, r))"),
    "workers": (int, 0, "parallel replication workers; 0 = auto"),
    "stein_c": (float, 1.0, "collapse constant C used in the reported bound"),
    "output_dir": (str, "out", "report directory"),
    "formats": (list, ["csv", "json"], "subset of {csv, json}"),
}


def _coerce(key: str, value, want: type):
    if want is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if want is int and isinstance(value, bool):
        raise ConfigError(f"key '{key}' must be an integer, got a boolean")
    if not isinstance(value, want):
        raise ConfigError(
            f"key '{key}' must be {want.__name__}, got {type(value).__name__}"
        )
    return value


def load_config(path) -> SweepConfig:
    """Parse and validate a sweep config file (flat TOML key/value schema).

    Unknown keys are hard errors (with a nearest-key suggestion); every
    (N, alpha) cell is checked for arrival-distribution feasibility before
    anything runs.
    """
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: parse error: {exc}")

    for key in raw:
        if key not in CONFIG_SCHEMA:
            hint = difflib.get_close_matches(key, CONFIG_SCHEMA, n=1)
            suffix = f"; did you mean '{hint[0]}'?" if hint else ""
            raise ConfigError(f"{path}: unknown key '{key}'{suffix}")
    for key in ("n_list", "alpha_list"):
        if key not in raw:
            raise ConfigError(f"{path}: required key '{key}' is missing")

    values: dict[str, object] = {}
    for key, (want, default, _) in CONFIG_SCHEMA.items():
        values[key] = _coerce(key, raw[key], want) if key in raw else default

    try:
        policies = tuple(Policy.parse(str(p)) for p in values["policies"])
        cfg = SweepConfig(
            n_list=tuple(_coerce("n_list[i]", n, int) for n in values["n_list"]),
            alpha_list=tuple(float(a) for a in values["alpha_list"]),
            policies=policies,
            replications=values["replications"],
            sigma_a_sq=values["sigma_a_sq"],
            sigma_s_sq=values["sigma_s_sq"],
            horizon=values["horizon"] or None,
            warmup=values["warmup"] or None,
            horizon_mult=values["horizon_mult"],
            warmup_mult=values["warmup_mult"],
            sample_every=values["sample_every"] or None,
            n_batches=values["n_batches"],
            retain_scaled_totals=values["retain_scaled_totals"],
            retain_cap=values["retain_cap"],
            seed=values["seed"],
            workers=values["workers"],
            stein_c=values["stein_c"],
            output_dir=values["output_dir"],
            formats=tuple(str(f) for f in values["formats"]),
        )
    except ParameterError as exc:
        raise ConfigError(f"{path}: {exc}")

    for alpha in cfg.alpha_list:
        if alpha <= 2.0:
            logger.warning(
                "alpha=%s is outside the exponential-limit regime (alpha > 2); "
                "exploration is allowed but the theory targets need not hold",
                alpha,
            )
    validate_cells(cfg)
    return cfg


def validate_cells(cfg: SweepConfig) -> None:
    """Fail fast if any cell's arrival distribution is infeasible."""
    for n in cfg.n_list:
        for alpha in cfg.alpha_list:
            try:
                SimConfig(
                    n_servers=n, alpha=alpha,
                    sigma_a_sq=cfg.sigma_a_sq, sigma_s_sq=cfg.sigma_s_sq,
                ).build_dists()
            except ParameterError as exc:
                raise ConfigError(f"cell (N={n}, alpha={alpha}): {exc}")


@dataclass
class ReportRow:
    """One sweep cell's reported quantities (estimates carry stderrs)."""

    n_servers: int
    alpha: float
    policy: str
    lam: float
    drift_target: float
    u_rate_est: float
    u_rate_se: float
    total_q_est: float
    total_q_se: float
    scaled_mean_est: float
    scaled_mean_se: float
    limit_mean_target: float
    w1_unit_mean: float
    w1_theory_scale: float
    stein_rhs: float
    perp_norm_est: float
    perp_norm_se: float
    achieved_sigma_a_sq: float
    n_samples: int
    seed: int
    status: str
    runtime_seconds: float


# Column order of results.csv; runtime_seconds is deliberately excluded so
# repeated runs are byte-identical (it is still present in results.json).
CSV_COLUMNS: tuple[str, ...] = (
    "n_servers", "alpha", "policy", "lam", "drift_target",
    "u_rate_est", "u_rate_se", "total_q_est", "total_q_se",
    "scaled_mean_est", "scaled_mean_se", "limit_mean_target",
    "w1_unit_mean", "w1_theory_scale", "stein_rhs",
    "perp_norm_est", "perp_norm_se", "achieved_sigma_a_sq",
    "n_samples", "seed", "status",
)


@dataclass
class CellResult:
    row: ReportRow
    summary: RunSummary | None


def resolve_workers(cfg_workers: int, replications: int) -> int:
    """Worker count: explicit config wins, then the environment variable,
    then one worker per available core (capped by the replication count)."""
    if cfg_workers > 0:
        return cfg_workers
    env = os.environ.get(WORKERS_ENV_VAR, "")
    if env.strip():
        try:
            w = int(env)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV_VAR}={env!r} is not an integer")
        if w > 0:
            return w
    return max(1, min(os.cpu_count() or 1, replications))


def _replicate(args):
    cfg, spec, rep = args
    return run_replication(cfg, spec, rep)


def run_cell(cfg: SimConfig, spec: EstimatorSpec, workers: int) -> RunSummary:
    """Run and merge all replications of one cell (merge order is fixed by
    replication index, so the result is worker-count independent)."""
    tasks = [(cfg, spec, rep) for rep in range(cfg.replications)]
    if workers <= 1 or cfg.replications == 1:
        summaries = [_replicate(t) for t in tasks]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(_replicate, tasks))
    return merge_replications(summaries)


def _nan_row(cfg: SimConfig, sweep: SweepConfig, status: str, runtime: float) -> ReportRow:
    nan = math.nan
    return ReportRow(
        n_servers=cfg.n_servers, alpha=cfg.alpha, policy=str(cfg.policy),
        lam=cfg.lam, drift_target=cfg.drift,
        u_rate_est=nan, u_rate_se=nan, total_q_est=nan, total_q_se=nan,
        scaled_mean_est=nan, scaled_mean_se=nan, limit_mean_target=nan,
        w1_unit_mean=nan, w1_theory_scale=nan, stein_rhs=nan,
        perp_norm_est=nan, perp_norm_se=nan, achieved_sigma_a_sq=nan,
        n_samples=0, seed=sweep.seed, status=status, runtime_seconds=runtime,
    )


def summarize_cell(
    cfg: SimConfig, summary: RunSummary, sweep: SweepConfig, runtime: float
) -> ReportRow:
    limit_mean = (summary.achieved_sigma_a_sq + cfg.sigma_s_sq) / 2.0
    _, svc = cfg.build_dists()
    samples = summary.scaled_samples
    if samples.size:
        w1_unit = wasserstein1_to_exp(samples, float(np.mean(samples)))
        w1_theory = wasserstein1_to_exp(samples, limit_mean)
    else:
        w1_unit = w1_theory = math.nan
    return ReportRow(
        n_servers=cfg.n_servers,
        alpha=cfg.alpha,
        policy=str(cfg.policy),
        lam=cfg.lam,
        drift_target=cfg.drift,
        u_rate_est=summary.mean_total_u_per_slot.est,
        u_rate_se=summary.mean_total_u_per_slot.stderr,
        total_q_est=summary.mean_total_q.est,
        total_q_se=summary.mean_total_q.stderr,
        scaled_mean_est=summary.scaled_mean.est,
        scaled_mean_se=summary.scaled_mean.stderr,
        limit_mean_target=limit_mean,
        w1_unit_mean=w1_unit,
        w1_theory_scale=w1_theory,
        stein_rhs=stein_bound_rhs(
            cfg.n_servers, cfg.alpha, summary.achieved_sigma_a_sq + cfg.sigma_s_sq,
            svc.max_value, sweep.stein_c,
        ),
        perp_norm_est=summary.perp_moments[1].est,
        perp_norm_se=summary.perp_moments[1].stderr,
        achieved_sigma_a_sq=summary.achieved_sigma_a_sq,
        n_samples=summary.n_samples,
        seed=sweep.seed,
        status="ok",
        runtime_seconds=runtime,
    )


def run_sweep(sweep: SweepConfig, out_dir=None) -> list[CellResult]:
    """Execute every cell; flush reports after each one so an interruption
    loses at most the in-flight cell. Per-cell failures are recorded in the
    row's status and the sweep continues."""
    out = Path(out_dir if out_dir is not None else sweep.output_dir)
    _check_writable(out)
    validate_cells(sweep)
    workers = resolve_workers(sweep.workers, sweep.replications)
    cells = sweep.cells()
    logger.info("sweep: %d cells, %d replications each, %d worker(s)",
                len(cells), sweep.replications, workers)
    results: list[CellResult] = []
    for i, cfg in enumerate(cells):
        label = f"N={cfg.n_servers} alpha={cfg.alpha} policy={cfg.policy}"
        t0 = time.perf_counter()
        try:
            summary = run_cell(cfg, sweep.estimator_spec(cfg), workers)
            runtime = time.perf_counter() - t0
            row = summarize_cell(cfg, summary, sweep, runtime)
            logger.info("cell %d/%d %s done in %.1fs (u_rate %.4g vs drift %.4g)",
                        i + 1, len(cells), label, runtime,
                        row.u_rate_est, row.drift_target)
        except Exception as exc:  # keep sweeping; the row records the failure
            runtime = time.perf_counter() - t0
            summary = None
            row = _nan_row(cfg, sweep, f"error: {exc}", runtime)
            logger.error("cell %d/%d %s failed: %s", i + 1, len(cells), label, exc)
        results.append(CellResult(row=row, summary=summary))
        emit_report(results, sweep.formats, out)
    return results


def _check_writable(out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    probe = out_dir / ".write_probe"
    try:
        probe.write_text("")
    except OSError as exc:
        raise OSError(f"output directory {out_dir} is not writable: {exc}")
    finally:
        if probe.exists():
            probe.unlink()


def _fmt(value) -> str:
    # repr round-trips floats at shortest form; keeps CSV deterministic
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_report(cells: list[CellResult], formats, output_dir) -> list[Path]:
    """Write results.csv / results.json plus per-cell qq_*.csv and mgf_*.csv
    (when retained samples exist). Returns the written paths."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not cells:
        raise ValueError("no rows to emit")
    written: list[Path] = []

    if "csv" in formats:
        path = out / "results.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for cell in cells:
                record = asdict(cell.row)
                writer.writerow([_fmt(record[col]) for col in CSV_COLUMNS])
        written.append(path)

    if "json" in formats:
        path = out / "results.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump([asdict(c.row) for c in cells], fh, indent=2)
            fh.write("\n")
        written.append(path)

    multi_policy = len({c.row.policy for c in cells}) > 1
    for cell in cells:
        s = cell.summary
        if s is None or not s.scaled_samples.size:
            continue
        row = cell.row
        tag = f"{row.n_servers}_{row.alpha:g}"
        if multi_policy:
            tag += f"_{row.policy.replace('(', '').replace(')', '')}"
        qq = exp_qq_data(s.scaled_samples)
        path = out / f"qq_{tag}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["theoretical_quantile", "empirical_quantile"])
            for theo, emp in qq:
                writer.writerow([_fmt(float(theo)), _fmt(float(emp))])
        written.append(path)

        path = out / f"mgf_{tag}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["theta", "est", "se", "target"])
            for theta, est, se in empirical_mgf(s.scaled_samples, THETA_GRID):
                writer.writerow(
                    [_fmt(theta), _fmt(est), _fmt(se), _fmt(1.0 / (1.0 - theta))]
                )
        written.append(path)
    return written
