"""Command line entry point ``precoder``."""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from ..errors import PrecodingError
from .bench import run_bench
from .config import ALGORITHMS, load_config
from .experiment import run_experiment
from .report import emit_report

RHO_GRID = [0.1, 0.3, 0.5, 0.7, 0.9]


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser():
    p = argparse.ArgumentParser(prog="precoder",
                                description="Moment-based stochastic MIMO precoding experiments")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a sweep and write CSV/JSON reports")
    r.add_argument("--config", required=True)
    r.add_argument("--algorithm", action="append", choices=ALGORITHMS,
                   help="repeat to select several; default from the config")
    r.add_argument("--seed", type=int)
    r.add_argument("--blocks", type=int, help="Monte-Carlo blocks per evaluation")
    r.add_argument("--tol", type=float)
    r.add_argument("--max-iters", type=int)
    r.add_argument("--paper-scale", action="store_true", help="full-size array dimensions")
    r.add_argument("--timing", action="store_true",
                   help="fill iter_time_ms (makes the CSV run-dependent)")
    r.add_argument("--out", help="output directory (default: config 'out')")

    b = sub.add_parser("bound-check", help="compare the bound with simulated rates across rho")
    b.add_argument("--config", required=True)
    b.add_argument("--out")

    n = sub.add_parser("bench", help="per-iteration timing of both solvers")
    n.add_argument("--mt-list", type=_int_list, default=[32, 64, 128])
    n.add_argument("--k", type=int, default=16)
    n.add_argument("--iters", type=int, default=25)
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--out", required=True)
    return p


def cmd_run(args):
    cfg = load_config(args.config)
    cfg = cfg.replace(algorithms=args.algorithm, seed=args.seed, n_blocks=args.blocks,
                      tol=args.tol, max_iters=args.max_iters,
                      paper_scale=True if args.paper_scale else None,
                      timing=True if args.timing else None)
    out = args.out or cfg.out
    if not out:
        raise PrecodingError("no output directory: pass --out or set 'out' in the config")
    report = run_experiment(cfg)
    for path in emit_report(report, out):
        print(path)
    bad = [r for r in report.rows if r.failed]
    for r in bad:
        print(f"failed: {r.algorithm} at {r.sweep_param}={r.sweep_value}: {r.error}",
              file=sys.stderr)
    if report.bound_violations():
        print("lower-bound audit failed", file=sys.stderr)
        return 3
    return 1 if bad else 0


def cmd_bound_check(args):
    cfg = load_config(args.config)
    if cfg.sweep.param != "rho":
        cfg = cfg.replace(sweep={"param": "rho", "values": RHO_GRID})
    cfg = cfg.replace(algorithms=["fp"])
    report = run_experiment(cfg)
    print("rho,fhat_nats,mc_rate_nats,mc_ci99_nats,bound_ok")
    for r in report.rows:
        if r.failed:
            print(f"{r.sweep_value},,,,failed")
        else:
            print(f"{r.sweep_value},{r.fhat_nats:.6f},{r.mc_rate_nats:.6f},"
                  f"{r.mc_ci99_nats:.6f},{r.bound_ok}")
    if args.out:
        emit_report(report, args.out, stem="bound_check")
    return 0 if not report.bound_violations() else 3


def cmd_bench(args):
    rows = run_bench(args.mt_list, K=args.k, n_iters=args.iters, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "bench.csv")
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["mt", "fp_ms", "fast_fp_ms", "ratio"])
        for r in rows:
            w.writerow([r.mt, f"{r.fp_ms:.4f}", f"{r.fast_fp_ms:.4f}", f"{r.ratio:.2f}"])
            print(f"Mt={r.mt:4d}  fp {r.fp_ms:8.3f} ms  fast-fp {r.fast_fp_ms:8.3f} ms  "
                  f"ratio {r.ratio:5.1f}")
    with open(os.path.join(args.out, "bench.json"), "w") as f:
        json.dump([dict(mt=r.mt, fp_ms=r.fp_ms, fast_fp_ms=r.fast_fp_ms, ratio=r.ratio,
                        iterations=r.iterations) for r in rows], f, indent=1)
    print(path)
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "bound-check": cmd_bound_check, "bench": cmd_bench}[args.command]
    try:
        return handler(args)
    except PrecodingError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
