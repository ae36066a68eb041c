"""Batch command line: generate instances, run policies, verify properties.

    fluidalloc generate --kind greedy_tight --params c=100 --out tight.json
    fluidalloc simulate --instance tight.json --policy alg --reps 50 --seed 7 --out runs.csv
    fluidalloc compare --instance tight.json --policies greedy,galg,alg --reps 50 --seed 7 --out cmp.csv
    fluidalloc verify --suite lemma1 --trials 50 --seed 7

Report commands write a PNG figure next to each CSV unless --no-figure is
given. FLUIDALLOC_WORKERS sets the worker-pool size.
"""

from __future__ import annotations

import argparse
import sys

from . import generators, harness, verify
from .model import save_instance
from .rounding import DEFAULT_DELTA_CONST


def _positive_int(raw: str) -> int:
    value = int(raw)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {raw}")
    return value


def _parse_param(token: str):
    key, _, raw = token.partition("=")
    if not key or not raw:
        raise argparse.ArgumentTypeError(f"params must look like key=value, got {token!r}")
    if ":" in raw:
        lo, _, hi = raw.partition(":")
        return key, (int(lo), int(hi))
    for cast in (int, float):
        try:
            return key, cast(raw)
        except ValueError:
            continue
    return key, raw


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fluidalloc", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a generated instance file")
    gen.add_argument("--kind", required=True, choices=generators.GENERATOR_KINDS)
    gen.add_argument("--params", nargs="*", default=[], type=_parse_param,
                     metavar="key=value")
    gen.add_argument("--out", required=True)

    sim = sub.add_parser("simulate", help="run one policy over seeded replications")
    sim.add_argument("--instance", required=True)
    sim.add_argument("--policy", required=True, choices=harness.ALL_POLICIES)
    sim.add_argument("--reps", type=_positive_int, default=1)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True)
    sim.add_argument("--format", choices=("csv", "json"), default="csv")
    sim.add_argument("--delta-const", type=float, default=DEFAULT_DELTA_CONST,
                     help="constant in the down-scaling margin sqrt(const*ln(c)/c)")
    sim.add_argument("--no-figure", action="store_true")

    cmp_ = sub.add_parser("compare", help="compare policies on one instance")
    cmp_.add_argument("--instance", required=True)
    cmp_.add_argument("--policies", required=True,
                      help="comma-separated policy ids")
    cmp_.add_argument("--reps", type=_positive_int, default=1)
    cmp_.add_argument("--seed", type=int, default=0)
    cmp_.add_argument("--opt", default="auto",
                      help="'auto' (exact oracle when eligible), 'off', or a number")
    cmp_.add_argument("--out")
    cmp_.add_argument("--format", choices=("csv", "json"), default="csv")
    cmp_.add_argument("--delta-const", type=float, default=DEFAULT_DELTA_CONST)
    cmp_.add_argument("--no-figure", action="store_true")

    ver = sub.add_parser("verify", help="run a property battery")
    ver.add_argument("--suite", required=True, choices=verify.SUITES)
    ver.add_argument("--trials", type=_positive_int, required=True)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--replications", type=int, default=None,
                     help="Monte Carlo replications for sampling-based suites")
    ver.add_argument("--dump-dir", default=".",
                     help="where failing cases are written for replay")
    return parser


def _cmd_generate(args) -> int:
    params = dict(args.params)
    instance = generators.generate(args.kind, **params)
    save_instance(instance, args.out)
    print(f"wrote {args.out}: mode={instance.mode} resources={len(instance.resources)} "
          f"arrivals={instance.num_arrivals}")
    return 0


def _cmd_simulate(args) -> int:
    config = harness.ExperimentConfig(
        policies=[args.policy], replications=args.reps, seed=args.seed,
        instance_path=args.instance, delta_const=args.delta_const,
        out=args.out, fmt=args.format, figures=not args.no_figure)
    result = harness.run_experiment(config)
    for w in result["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    for f in result["files"]:
        print(f"wrote {f}")
    return 0


def _cmd_compare(args) -> int:
    policies = [p.strip() for p in args.policies.split(",") if p.strip()]
    if len(policies) < 2:
        print("error: compare needs at least two policies", file=sys.stderr)
        return 2
    opt: str | float = args.opt
    if opt not in ("auto", "off"):
        try:
            opt = float(opt)
        except ValueError:
            print(f"error: bad --opt value {args.opt!r}", file=sys.stderr)
            return 2
    config = harness.ExperimentConfig(
        policies=policies, replications=args.reps, seed=args.seed,
        instance_path=args.instance, delta_const=args.delta_const,
        opt=opt, out=args.out, fmt=args.format, figures=not args.no_figure)
    result = harness.run_experiment(config)
    for w in result["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    if not args.out:
        for row in result["rows"]:
            ratio = f" ratio={row['ratio']:.4f}" if row["ratio"] != "" else ""
            print(f"{row['policy']:8s} mean={row['mean_reward']:.6f} "
                  f"se={row['std_err']:.6f}{ratio}")
    for f in result["files"]:
        print(f"wrote {f}")
    return 0


def _cmd_verify(args) -> int:
    report = verify.verify_lemmas(args.suite, args.trials, args.seed,
                                  replications=args.replications)
    for note in report.notes:
        print(f"note: {note}")
    if report.passed:
        print(f"PASS {args.suite}: {report.trials} trials")
        return 0
    print(f"FAIL {args.suite}: {len(report.failures)} failure(s)")
    for line in report.failures[:10]:
        print(f"  {line}")
    for path in report.dump_failures(args.dump_dir):
        print(f"  failing case written to {path}")
    return 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {
        "generate": _cmd_generate,
        "simulate": _cmd_simulate,
        "compare": _cmd_compare,
        "verify": _cmd_verify,
    }[args.command]
    try:
        return handler(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
