"""Command line interface: run experiments, inspect matrices, emit supports,
validate configs. Exit codes: 0 ok, 1 validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import ConfigError, load_config
from .dynamics import trial_rng
from .experiment import STREAM_SUPPORT, _fmt, run_experiment
from .linalg import SystemMatrices
from .sources import generate_support

NOMINAL_CHECK_TOL = 1e-12


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coalitionflow",
        description="Simulator for robust dynamic coalitional TU games",
    )
    parser.add_argument("--seed", type=int, default=None, help="override sim.seed")
    parser.add_argument("--out-dir", default=None, help="override output.dir")
    parser.add_argument("--stride", type=int, default=None, help="override output.stride")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the configured experiment")
    p_run.add_argument("config")
    p_run.add_argument("--workers", type=int, default=None,
                       help="worker processes (default: cpu count)")
    p_run.add_argument("--no-plots", action="store_true", help="skip figure rendering")

    p_check = sub.add_parser("check-matrices", help="print system matrices and residuals")
    p_check.add_argument("config")

    p_gen = sub.add_parser("gen-support", help="emit one generated (R, p) pair as CSV")
    p_gen.add_argument("config")

    p_val = sub.add_parser("validate", help="validate a config file")
    p_val.add_argument("config")
    return parser


def _load(args) -> tuple:
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.stride is not None:
        overrides["stride"] = args.stride
    if args.out_dir is not None:
        overrides["out_dir"] = args.out_dir
    if overrides:
        from dataclasses import replace

        cfg = replace(cfg, **overrides)
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    run_experiment(
        cfg,
        workers=args.workers,
        quiet=args.quiet,
        plots=False if args.no_plots else None,
    )
    return 0


def cmd_check_matrices(args) -> int:
    cfg = _load(args)
    mats = SystemMatrices.for_players(cfg.n)
    residuals = mats.residuals()
    nominal = float(np.abs(mats.B @ cfg.u_nom - cfg.v_nom).max())
    if not args.quiet:
        with np.printoptions(precision=4, suppress=True, linewidth=160):
            print("B =")
            print(mats.B)
            print("B_dag =")
            print(mats.B_dag)
    print(f"right_inverse_residual = {_fmt(residuals['right_inverse'])}")
    print(f"completion_residual = {_fmt(residuals['completion'])}")
    print(f"null_space_residual = {_fmt(residuals['null_space'])}")
    print(f"row_sum_bound = {_fmt(mats.abs_row_sum_max())}")
    print(f"nominal_residual = {_fmt(nominal)}")
    if nominal > NOMINAL_CHECK_TOL:
        print(f"FAIL: nominal residual exceeds {NOMINAL_CHECK_TOL:g}", file=sys.stderr)
        return 2
    print("OK")
    return 0


def cmd_gen_support(args) -> int:
    cfg = _load(args)
    out_dir = args.out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    proc = generate_support(cfg.box, cfg.v_nom, trial_rng(cfg.seed, STREAM_SUPPORT, 0))
    path = os.path.join(out_dir, "support.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("weight," + ",".join(f"v_{j + 1}" for j in range(cfg.m)) + "\n")
        for i in range(cfg.m):
            cells = [_fmt(proc.weights[i])] + [_fmt(v) for v in proc.support[:, i]]
            fh.write(",".join(cells) + "\n")
    if not args.quiet:
        print(f"wrote {path} (accepted after {proc.attempts} tries)")
    return 0


def cmd_validate(args) -> int:
    _load(args)
    print("OK")
    return 0


COMMANDS = {
    "run": cmd_run,
    "check-matrices": cmd_check_matrices,
    "gen-support": cmd_gen_support,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"cannot read {exc.filename}: {exc.strerror}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime/numeric failures
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
