"""Command-line interface.

Subcommands: train, sweep, gen-dataset, sample, validate, aggregate,
plot-data. Exit codes: 0 success, 1 usage error, 2 validation failure,
3 runtime error. QEXP_THREADS caps worker parallelism.
"""

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser():
    p = _Parser(prog="qexp", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--config", type=str, help="experiment config file (INI)")
        sp.add_argument("--out", type=str, help="output directory override")
        sp.add_argument("--env", type=str, help="environment name override")
        sp.add_argument("--agent", type=str, help="algorithm override")
        sp.add_argument("--policy", type=str, help="policy family override")
        sp.add_argument("--steps", type=int, help="total steps override")
        sp.add_argument("--seed", type=int, help="single seed override")
        sp.add_argument("--seeds", type=str, help="comma-separated seed list override")
        sp.add_argument("--name", type=str, default="run", help="run directory name")

    sp = sub.add_parser("train", help="train one configuration over its seeds")
    add_common(sp)

    sp = sub.add_parser("sweep", help="hyperparameter grid sweep plus best-config re-run")
    add_common(sp)

    sp = sub.add_parser("gen-dataset", help="roll out a checkpointed policy into a dataset file")
    sp.add_argument("--checkpoint", required=True, help="checkpoint.npz from a training run")
    sp.add_argument("--n", type=int, required=True, help="number of transitions")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, help="dataset file path")

    sp = sub.add_parser("sample", help="draw from a policy family and emit CSV")
    sp.add_argument("--policy", required=True,
                    choices=["gaussian", "squashed_gaussian", "beta", "student_t", "q_gaussian"])
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", type=str, default="-", help="CSV path or - for stdout")
    sp.add_argument("--mu", type=float, default=0.0)
    sp.add_argument("--sigma", type=float, default=1.0)
    sp.add_argument("--q", type=float, default=2.0)
    sp.add_argument("--nu", type=float, default=3.0)
    sp.add_argument("--alpha", type=float, default=2.0)
    sp.add_argument("--beta", type=float, default=2.0)
    sp.add_argument("--low", type=float, default=-1.0)
    sp.add_argument("--high", type=float, default=1.0)

    sp = sub.add_parser("validate", help="run oracle validation suites")
    sp.add_argument("--suite", type=str, default="all",
                    help="math|density|gradient|sampler|sparsemax|all")
    sp.add_argument("--out", type=str, default="-", help="CSV path or - for stdout")

    sp = sub.add_parser("aggregate", help="mean and standard error across runs")
    sp.add_argument("dirs", nargs="+", help="run or seed directories (or eval CSVs)")
    sp.add_argument("--out", type=str, default="-")

    sp = sub.add_parser("plot-data", help="aggregated, smoothed curve CSV")
    sp.add_argument("dirs", nargs="+")
    sp.add_argument("--out", type=str, required=True)
    sp.add_argument("--window", type=int, default=10)
    return p


def _load_cfg(args):
    from .config import ExperimentConfig, load_config

    cfg = load_config(args.config) if args.config else ExperimentConfig()
    updates = {}
    if args.env:
        updates["env_name"] = args.env
    if args.agent:
        updates["algo"] = args.agent
        updates["agent"] = replace(cfg.agent, algo=args.agent)
    if args.policy:
        updates["family"] = args.policy
    if args.steps:
        updates["steps"] = args.steps
    if args.seeds:
        updates["seeds"] = tuple(int(s) for s in args.seeds.split(","))
    elif args.seed is not None:
        updates["seeds"] = (args.seed,)
    if args.out:
        updates["out_dir"] = args.out
    if updates:
        updates.setdefault("source_text", "")
        cfg = replace(cfg, **updates)
    return cfg


def _emit_csv(rows, fieldnames, out):
    fh = sys.stdout if out == "-" else open(out, "w", newline="")
    try:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()


def _cmd_train(args):
    from .runner import run_train

    cfg = _load_cfg(args)
    root = run_train(cfg, name=args.name)
    print(f"run directory: {root}")
    return 0


def _cmd_sweep(args):
    from .runner import run_sweep

    cfg = _load_cfg(args)
    result = run_sweep(cfg, name=args.name)
    if result["best_index"] is None:
        print("sweep produced no successful points", file=sys.stderr)
        return 3
    print(f"best point: {result['best_point']} (sweep AUC {result['best_auc_sweep']:.3f})")
    print(f"best-config run: {result['best_dir']}")
    return 0


def _cmd_gen_dataset(args):
    from .runner import gen_dataset_from_checkpoint

    ds = gen_dataset_from_checkpoint(args.checkpoint, args.n, args.seed, args.out)
    print(f"wrote {len(ds)} transitions to {args.out}")
    return 0


def _cmd_sample(args):
    from . import distributions as dist
    from .samplers import (Rng, sample_beta, sample_gaussian, sample_q_gaussian,
                           sample_squashed_gaussian, sample_student_t)

    rng = Rng.from_triple(0, args.seed, "cli-sample")
    ls = dist.LocScaleParams(np.array([args.mu]), np.array([[args.sigma]]))
    draw = {
        "gaussian": lambda: sample_gaussian(ls, rng),
        "squashed_gaussian": lambda: sample_squashed_gaussian(ls, rng),
        "student_t": lambda: sample_student_t(dist.StudentTParams(ls, args.nu), rng),
        "q_gaussian": lambda: sample_q_gaussian(dist.QGaussianParams(ls, args.q), rng),
        "beta": lambda: sample_beta(dist.BetaParams(
            np.array([args.alpha]), np.array([args.beta]),
            np.array([args.low]), np.array([args.high])), rng),
    }[args.policy]
    rows = [{"index": i, "value": repr(float(draw()[0]))} for i in range(args.n)]
    _emit_csv(rows, ["index", "value"], args.out)
    return 0


def _cmd_validate(args):
    from .validate import run_validate

    rows = run_validate(args.suite)
    out_rows = [{"check": r["check"], "passed": "pass" if r["passed"] else "FAIL",
                 "detail": r["detail"]} for r in rows]
    _emit_csv(out_rows, ["check", "passed", "detail"], args.out)
    failed = [r for r in rows if not r["passed"]]
    if failed:
        print(f"{len(failed)} validation check(s) failed", file=sys.stderr)
        return 2
    return 0


def _cmd_aggregate(args):
    from .runner import aggregate

    rows = aggregate(args.dirs)
    out_rows = [{"step": r["step"], "mean_return": repr(r["mean_return"]),
                 "stderr": repr(r["stderr"]), "n": r["n"]} for r in rows]
    _emit_csv(out_rows, ["step", "mean_return", "stderr", "n"], args.out)
    return 0


def _cmd_plot_data(args):
    from .runner import plot_data

    plot_data(args.dirs, args.out, window=args.window)
    print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "sweep": _cmd_sweep,
    "gen-dataset": _cmd_gen_dataset,
    "sample": _cmd_sample,
    "validate": _cmd_validate,
    "aggregate": _cmd_aggregate,
    "plot-data": _cmd_plot_data,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, FileNotFoundError) as exc:
        from .config import ConfigError

        if isinstance(exc, ConfigError):
            print(f"usage error: {exc}", file=sys.stderr)
            return 1
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # runtime failures map to exit 3
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
