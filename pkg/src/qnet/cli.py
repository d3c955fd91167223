"""Command line entry point: ``qnet simulate | estimate | analyze``.

Exit codes: 0 run completed (flags or not), 2 input error, 3 no requested
test could be run because of unmet count preconditions.
"""
from __future__ import annotations

import argparse
import os
import sys

from qnet import __version__
from qnet.errors import QnetError
from qnet.estimators import estimate
from qnet.network import validate_topology
from qnet.io import (
    ANALYSIS_KINDS,
    AnalysisConfig,
    dump_json,
    load_model,
    parse_observations,
    render_estimates,
    render_report,
    report_is_empty,
    run_analyze,
    run_simulate,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_PRECONDITION = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate an observation CSV from a model file")
    sim.add_argument("--model", required=True, help="model JSON, or 'demo' for the built-in 4-3-2-4 network")
    sim.add_argument("--n", type=int, required=True, help="number of parts")
    sim.add_argument("--seed", type=int, default=0, help="64-bit seed (QNET_SEED overrides)")
    sim.add_argument("--out", required=True, help="output CSV; metadata goes to <out>.meta.json")

    def data_args(p):
        p.add_argument("--data", required=True, help="observation CSV")
        p.add_argument("--model", help="model JSON whose topology is enforced on the data")
        p.add_argument("--columns", help="comma-separated column sizes enforced on the data")
        p.add_argument("--format", choices=("json", "table"),
                       help="output format (default: table on a terminal, json otherwise)")
        p.add_argument("--out", help="write the output here instead of stdout")

    est = sub.add_parser("estimate", help="print the T / Sigma estimates")
    data_args(est)

    ana = sub.add_parser("analyze", help="estimate, test and flag anomalous machines")
    data_args(ana)
    ana.add_argument("--alpha", type=float, default=0.05)
    ana.add_argument("--adjust", choices=("by", "none"), default="by")
    ana.add_argument("--kinds", default=",".join(ANALYSIS_KINDS),
                     help="comma-separated subset of mean,variance,bartlett")
    ana.add_argument("--reference", default="last",
                     help="reference machine row for the comparisons: 'last' or an index")
    ana.add_argument("--all-pairs", action="store_true", help="test every pair instead of against a reference")
    ana.add_argument("--unequal-variance", action="store_true",
                     help="use the unpooled standard error for mean comparisons")
    ana.add_argument("--alternative", choices=("two-sided", "greater", "less"), default="two-sided")
    ana.add_argument("--min-count-warn", type=int, default=30)
    return parser


def _topology(args):
    if args.model:
        return load_model(args.model).topology
    if args.columns:
        return validate_topology([int(v) for v in args.columns.split(",")])
    return None


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def _format(args) -> str:
    if args.format:
        return args.format
    return "table" if args.out is None and sys.stdout.isatty() else "json"


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            seed = int(os.environ["QNET_SEED"]) if os.environ.get("QNET_SEED") else args.seed
            out, meta = run_simulate(load_model(args.model), args.n, seed, args.out)
            print(f"wrote {out} and {meta}", file=sys.stderr)
            return EXIT_OK

        _, dataset = parse_observations(args.data, _topology(args))
        if args.command == "estimate":
            est = estimate(dataset)
            text = dump_json(est.to_dict()) if _format(args) == "json" else render_estimates(est)
            _emit(text, args.out)
            return EXIT_OK

        reference = None if args.reference == "last" else int(args.reference)
        config = AnalysisConfig(
            alpha=args.alpha, adjust=args.adjust,
            kinds=tuple(k.strip() for k in args.kinds.split(",") if k.strip()),
            reference_row=reference, all_pairs=args.all_pairs, equal_variance=not args.unequal_variance,
            alternative=args.alternative, min_count_warn=args.min_count_warn)
        report = run_analyze(dataset, config)
        if _format(args) == "json":
            text = dump_json(report)
        else:
            text = render_report(report, estimate(dataset))
        _emit(text, args.out)
        return EXIT_PRECONDITION if report_is_empty(report) else EXIT_OK
    except (QnetError, ValueError, OSError) as exc:
        print(f"qnet: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
