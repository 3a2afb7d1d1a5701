"""``dyson-ode`` command-line entry point."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .library import BUILTINS, builtin_spec
from .pipeline import (EXIT_ERROR, EXIT_OK, EXIT_PARSE, UnstableProblemError, estimate_table,
                       run_encode, run_estimate, run_solve)
from .serialize import dumps
from .specfile import SpecError, load


def resolve_spec(argument: str):
    """A spec file path, a builtin name, or ``builtin:<name>``."""
    if os.path.exists(argument):
        return load(argument)
    name = argument.removeprefix("builtin:")
    if name in BUILTINS:
        return builtin_spec(name)
    raise SpecError(f"no spec file or builtin named {argument!r}")


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dyson-ode",
        description="Truncated Dyson-series linear-system ODE solver, verifier and "
                    "resource estimator.")
    parser.add_argument("command", choices=("solve", "encode", "estimate", "verify"))
    parser.add_argument("spec", metavar="SPEC",
                        help="spec file or builtin name; for verify, a suite name")
    parser.add_argument("--epsilon", type=float, default=1e-6, help="target accuracy")
    parser.add_argument("--r", type=int, help="override the number of segments")
    parser.add_argument("--k", type=int, help="override the truncation order")
    parser.add_argument("--m", type=int, help="override the points per segment")
    parser.add_argument("--dense", action="store_true",
                        help="encode: also write the dense matrix and its inverse")
    parser.add_argument("--seed", type=int, default=0, help="seed for randomized sampling")
    parser.add_argument("--allow-unstable", action="store_true",
                        help="solve problems with a positive logarithmic norm")
    parser.add_argument("--out", default="dyson-ode-out", help="output directory")
    return parser


def _write(directory: Path, name: str, text: str) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / name).write_text(text, encoding="utf-8")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    out = Path(args.out)
    try:
        if args.command == "verify":
            from .suites import SUITES, run_suites
            if args.spec not in SUITES:
                print(f"unknown suite {args.spec!r}; choose from {', '.join(SUITES)}",
                      file=sys.stderr)
                return EXIT_ERROR
            checks = run_suites(args.spec, seed=args.seed)
            _write(out, "bounds.csv", checks.to_csv())
            print(checks.summary())
            return EXIT_OK if checks.passed else EXIT_ERROR

        spec = resolve_spec(args.spec)
        overrides = {"r": args.r, "k": args.k, "m": args.m}
        if args.command == "solve":
            result = run_solve(spec, args.epsilon, seed=args.seed,
                               allow_unstable=args.allow_unstable, **overrides)
            _write(out, "report.json", result.report_json)
            _write(out, "history.csv", result.history_csv)
            _write(out, "bounds.csv", result.bounds_csv)
            _write(out, "timings.json", json.dumps(result.timings, indent=2) + "\n")
            checks = result.report["checks"]
            print(f"d_BW = {result.report['d_bw']:.3e} (target {checks['accuracy_target']:.3e}), "
                  f"budget {'pass' if checks['budget'] else 'FAIL'}, exit {result.exit_code}")
            return result.exit_code
        if args.command == "estimate":
            result = run_estimate(spec, args.epsilon, **overrides)
            _write(out, "report.json", result.report_json)
            sys.stdout.write(estimate_table(result.report))
            return result.exit_code
        doc = run_encode(spec, epsilon=args.epsilon, dense=args.dense, **overrides)
        _write(out, "system.json", dumps(doc))
        print(f"wrote {out / 'system.json'}: N = {doc['system']['n']}, r = {doc['system']['r']}, "
              f"K = {doc['k']}")
        return EXIT_OK
    except SpecError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except UnstableProblemError as exc:
        print(f"unstable: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
