"""``bench`` command line: run experiments, check gradients, list the kernel bank."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench
from .kernels import base_kernel_bank
from .network import gradient_check, random_instance


def _run(args):
    config = bench.load_config(args.config)
    config = bench.with_overrides(
        config,
        datasets=tuple(args.dataset) if args.dataset else None,
        methods=tuple(args.method) if args.method else None,
        repetitions=args.reps,
        base_seed=args.seed,
        output=Path(args.out) if args.out else None,
    )
    report = bench.run_experiment(config)
    sys.stdout.write(bench.render_report(report, args.format))
    for row in report.rows:
        for reason in row.reasons:
            print(f"{row.dataset}/{row.method}: {reason}", file=sys.stderr)
    return 1 if report.all_failed else 0


def _verify_gradients(args):
    rng = np.random.Generator(np.random.PCG64(args.seed))
    worst = 0.0
    for i in range(args.count):
        S = int(rng.choice([1, 3, 5]))
        n = int(rng.integers(5, 21))
        width = int(rng.integers(2, 9))
        C = int(rng.integers(2, 4))
        model, rows, targets = random_instance(rng, S, n, width, C)
        err = gradient_check(model, rows, targets)
        worst = max(worst, err)
        print(f"instance {i:2d}  S={S} n={n:2d} n1={width} C={C}  max rel err {err:.2e}")
    ok = worst < args.tol
    print(f"{'PASS' if ok else 'FAIL'}: worst relative error {worst:.2e} (tol {args.tol:g})")
    return 0 if ok else 1


def _list_kernels(args):
    for i, spec in enumerate(base_kernel_bank()):
        print(f"{i:2d}  {spec}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="bench", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("--config", required=True)
    run.add_argument("--dataset", action="append", help="restrict to dataset (repeatable)")
    run.add_argument("--method", action="append", choices=bench.METHODS,
                     help="restrict to method (repeatable)")
    run.add_argument("--reps", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="output folder for report, curves and diagnostics")
    run.add_argument("--format", choices=("csv", "markdown"), default="csv")
    run.set_defaults(func=_run)

    grad = sub.add_parser("verify-gradients", help="finite-difference gradient check")
    grad.add_argument("--count", type=int, default=25)
    grad.add_argument("--seed", type=int, default=0)
    grad.add_argument("--tol", type=float, default=1e-5)
    grad.set_defaults(func=_verify_gradients)

    lk = sub.add_parser("list-kernels", help="print the base kernel bank")
    lk.set_defaults(func=_list_kernels)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"bench: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
