"""Command-line entry point (``fwas`` / ``python3 -m fwas``).

Exit status is 0 on success, 1 on usage errors and 2 when a run violates
an internal invariant.  Errors go to standard error prefixed ``ERROR:``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import harness
from .active_set import InvariantError
from .erm import estimate_constants
from .trace import read_trace_csv

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_run_flags(p):
    p.add_argument("--manifest", required=True, help="experiment manifest (JSON)")
    p.add_argument("--seed", type=int, help="run only this seed")
    p.add_argument("--out", help="output directory (default: the manifest's)")
    p.add_argument("--threads", type=int, default=1, help="worker processes for repetitions")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fwas", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="run a manifest and write trace CSVs")
    _add_run_flags(p)

    p = sub.add_parser("bench", help="run a manifest with wall-clock timing and print a summary")
    _add_run_flags(p)

    p = sub.add_parser("gen-data", help="write a synthetic instance")
    p.add_argument("kind", choices=["gflasso", "ssvm", "simplex-qp"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("constants", help="print the linear-rate constants of a problem as JSON")
    p.add_argument("--problem", required=True, help="problem document (JSON)")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("rate-fit", help="fit the log-linear decay of a trace")
    p.add_argument("--trace", required=True, help="trace CSV")
    p.add_argument("--f-star", type=float, required=True)
    p.add_argument("--window", type=int, nargs=2, metavar=("K_LO", "K_HI"))
    return parser


def _load(args):
    manifest = harness.load_manifest(args.manifest)
    if args.threads < 1:
        raise UsageError("--threads must be at least 1")
    if args.seed is not None and args.seed < 0:
        raise UsageError("--seed must be non-negative")
    out = args.out or manifest.resolve(manifest.output)
    seeds = None if args.seed is None else [args.seed]
    return manifest, out, seeds


def cmd_solve(args):
    manifest, out, seeds = _load(args)
    result = harness.run_manifest(manifest, out, threads=args.threads, seeds=seeds)
    for path in result.files:
        print(path)
    return 0


def cmd_bench(args):
    manifest, out, seeds = _load(args)
    result = harness.run_manifest(manifest, out, threads=args.threads, seeds=seeds, record_time=True)
    summary = harness.summarize(result)
    with open(os.path.join(out, f"{manifest.experiment}_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=1)
    print(f"{'solver':<12} {'seed':>5} {'objective':>16} {'passes':>9} {'millis':>10}")
    for run in summary["runs"]:
        print(f"{run['solver']:<12} {run['seed']:>5} {run['objective']:>16.8g} "
              f"{run['passes']:>9.2f} {run['millis']:>10.1f}")
    return 0


def cmd_gen_data(args):
    os.makedirs(args.out, exist_ok=True)
    if args.kind == "gflasso":
        from .applications.gflasso import gen_gflasso_data

        gen_gflasso_data(args.seed).save(args.out)
        print(args.out)
    elif args.kind == "ssvm":
        from .applications.ssvm import gen_ssvm_data

        path = os.path.join(args.out, "ssvm.jsonl")
        gen_ssvm_data(args.seed).save_jsonl(path)
        print(path)
    else:
        problem, spec, _ = harness.simplex_qp(seed=args.seed)
        path = os.path.join(args.out, "simplex_qp.json")
        with open(path, "w") as fh:
            json.dump(harness.problem_to_dict(problem, spec), fh)
        print(path)
    return 0


def cmd_constants(args):
    problem, spec = harness.load_problem(args.problem)
    report = estimate_constants(problem, spec, samples=args.samples, seed=args.seed)
    print(json.dumps(report.to_dict(), indent=1))
    return 0


def cmd_rate_fit(args):
    trace = read_trace_csv(args.trace)
    fit = harness.rate_fit(trace, args.f_star, args.window)
    print(json.dumps({"slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared,
                      "window": list(fit.window), "points": fit.points}, indent=1))
    return 0


COMMANDS = {"solve": cmd_solve, "bench": cmd_bench, "gen-data": cmd_gen_data,
            "constants": cmd_constants, "rate-fit": cmd_rate_fit}


def main(argv=None) -> int:
    level = os.environ.get("FWAS_LOG", "error").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except InvariantError as exc:
        print(f"ERROR: invariant violated: {exc}", file=sys.stderr)
        return 2
    except (UsageError, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 1
