"""Command line interface: `run` a sweep, `verify` the acceptance suite,
`oracle` for exact tiny-chain values, `bound` for the rate-bound formula.

Progress goes to stderr; results go to files (run) or stdout (verify,
oracle, bound). Exit codes: 0 success / all criteria pass, 1 criteria
failed, 2 infrastructure error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .acceptance import print_report, run_verify
from .estimate import oracle_stationary
from .model import DiscreteDist, make_arrival_dist, make_service_dist
from .stats import stein_bound_rhs
from .sweep import ConfigError, load_config, run_sweep

logger = logging.getLogger("jsqsim")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jsqsim",
        description="Discrete-time JSQ load-balancing simulator and "
        "heavy-traffic verification harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a sweep from a config file")
    run_p.add_argument("--config", required=True, help="TOML sweep config")
    run_p.add_argument("--seed", type=int, help="override the config seed")
    run_p.add_argument("--workers", type=int, help="parallel replication workers")
    run_p.add_argument("--out", help="override the output directory")
    run_p.add_argument("--stein-c", type=float, help="collapse constant for the bound")

    ver_p = sub.add_parser("verify", help="run the acceptance criteria suite")
    ver_p.add_argument("--config", help="optional sweep config (defaults to desk scale)")
    ver_p.add_argument("--seed", type=int, help="override the seed")
    ver_p.add_argument("--workers", type=int, default=0)
    ver_p.add_argument("--out", default="verify_out", help="artifact directory")
    ver_p.add_argument("--quick", action="store_true",
                       help="reduced sweep, loosened tolerances")

    orc_p = sub.add_parser("oracle", help="exact stationary values of a tiny chain")
    orc_p.add_argument("--n-servers", type=int, required=True)
    group = orc_p.add_mutually_exclusive_group(required=True)
    group.add_argument("--lam", type=float, help="total arrival rate")
    group.add_argument("--alpha", type=float, help="heavy-traffic exponent")
    orc_p.add_argument("--sigma-a-sq", type=float, default=0.5)
    orc_p.add_argument("--sigma-s-sq", type=float, default=0.5)
    orc_p.add_argument("--q-cap", type=int, default=60, help="per-queue truncation")
    orc_p.add_argument("--dist-out", help="write the total-queue pmf to this CSV")

    bnd_p = sub.add_parser("bound", help="evaluate the rate bound on an N grid")
    bnd_p.add_argument("--alpha", type=float, required=True)
    bnd_p.add_argument("--sigma-sum-sq", type=float, default=1.0)
    bnd_p.add_argument("--s-max", type=float, default=2.0)
    bnd_p.add_argument("--c", type=float, default=1.0, help="collapse constant")
    bnd_p.add_argument("--n-min", type=float, default=1e2)
    bnd_p.add_argument("--n-max", type=float, default=1e6)
    bnd_p.add_argument("--n-points", type=int, default=9)
    bnd_p.add_argument("--out", help="write CSV here instead of stdout")
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.stein_c is not None:
        overrides["stein_c"] = args.stein_c
    if overrides:
        cfg = replace(cfg, **overrides)
    cells = run_sweep(cfg)
    failures = [c.row.status for c in cells if c.row.status != "ok"]
    if failures:
        logger.error("%d cell(s) failed: %s", len(failures), failures)
        return 2
    logger.info("wrote reports to %s", cfg.output_dir)
    return 0


def _cmd_verify(args) -> int:
    sweep = load_config(args.config) if args.config else None
    results = run_verify(
        sweep=sweep,
        quick=args.quick,
        seed=args.seed,
        workers=args.workers,
        out_dir=args.out,
    )
    print_report(results)
    return 0 if all(r.passed for r in results) else 1


def _cmd_oracle(args) -> int:
    arr = make_arrival_dist(
        args.n_servers, alpha=args.alpha, lambda_override=args.lam,
        sigma_a_sq=args.sigma_a_sq,
    )
    svc = make_service_dist(args.sigma_s_sq)
    result = oracle_stationary(arr, svc, args.n_servers, q_cap=args.q_cap)
    print(f"lambda = {arr.mean_exact!r}")
    print(f"E[sum q] = {result.e_total_q!r}")
    print(f"E[sum u] = {result.e_total_u!r}")
    print(f"identity N - lambda = {args.n_servers - arr.mean_exact!r}")
    print(f"boundary mass = {result.boundary_mass:.3e}")
    print(f"iterations = {result.n_iterations}")
    if args.dist_out:
        with open(args.dist_out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["total_q", "prob"])
            for k, p in enumerate(result.total_q_dist):
                writer.writerow([k, repr(float(p))])
        print(f"wrote total-queue pmf to {args.dist_out}")
    return 0


def _cmd_bound(args) -> int:
    grid = np.geomspace(args.n_min, args.n_max, args.n_points)
    rows = [
        (float(n), stein_bound_rhs(n, args.alpha, args.sigma_sum_sq,
                                   args.s_max, args.c))
        for n in grid
    ]
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(["n_servers", "stein_rhs"])
        for n, v in rows:
            writer.writerow([repr(n), repr(v)])
    finally:
        if args.out:
            out.close()
    return 0


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO,
        format="%(asctime)s %(levelname)s %(message)s",
        datefmt="%H:%M:%S",
    )
    args = build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "verify": _cmd_verify,
        "oracle": _cmd_oracle,
        "bound": _cmd_bound,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, OSError, ValueError) as exc:
        logger.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
