"""Command-line entry point: ``rlao run|fixture|bound|version``."""
from __future__ import annotations

import argparse
import json
import sys

from .. import __version__
from ..bounds import (
    PROBABILITY_BOUNDS,
    dependence_report,
    samples_needed,
    visit_marginals,
)
from ..errors import ConfigError, RlaoError
from .config import load_config, output_dir
from .fixtures import counterexample_fixture, fixture_document
from .suites import run_suite

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _cmd_run(args) -> int:
    try:
        doc = load_config(args.config)
        report = run_suite(doc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cases, summary = report.write(output_dir(doc))
    status = "PASS" if report.passed else "FAIL"
    print(f"{status} {report.name}: {report.n_cases} cases, {report.failures} failing; criterion: {report.criterion}")
    for note in report.notes:
        print(f"  {note}")
    print(f"  wrote {cases} and {summary}")
    return EXIT_OK if report.passed else EXIT_FAIL


def _cmd_fixture(args) -> int:
    m, phi = counterexample_fixture()
    print(json.dumps(fixture_document(), indent=2))
    reports = dependence_report(m, phi, m.start_state, (0, 0))
    first, second = visit_marginals(reports, phi.n_abstract)
    bb = next(r for r in reports if r.u == 1 and r.v == 1)
    print(f"Pr(Y1=B) = {first[1]:.12g}")
    print(f"Pr(Y2=B) = {second[1]:.12g}")
    print(f"joint(B,B) = {bb.joint:.12g} vs product = {bb.product:.12g} (gap {bb.gap:.12g})")
    return EXIT_OK


def _cmd_bound(args) -> int:
    if args.name == "samples_needed":
        if args.kappa is None:
            print("samples_needed needs --kappa", file=sys.stderr)
            return EXIT_CONFIG
        print(samples_needed(args.n_abstract, args.kappa, args.eps, args.variant))
        return EXIT_OK
    if args.n is None:
        print(f"{args.name} needs --n", file=sys.stderr)
        return EXIT_CONFIG
    rep = PROBABILITY_BOUNDS[args.name](args.n_abstract, args.n, args.eps)
    print(f"{rep.raw:.4g}")
    if args.verbose:
        print(f"raw={rep.raw!r} clamped={rep.clamped!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rlao", description="Abstraction-aware RL bounds and verification suites.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a suite from a JSON config")
    run.add_argument("config")
    run.set_defaults(func=_cmd_run)

    fix = sub.add_parser("fixture", help="print a built-in fixture")
    fix.add_argument("which", choices=["counterexample"])
    fix.set_defaults(func=_cmd_fixture)

    bound = sub.add_parser("bound", help="evaluate a closed-form bound")
    bound.add_argument("name", choices=[*PROBABILITY_BOUNDS, "samples_needed"])
    bound.add_argument("--n-abstract", type=int, required=True)
    bound.add_argument("--n", type=int, help="number of samples")
    bound.add_argument("--eps", type=float, required=True)
    bound.add_argument("--kappa", type=float)
    bound.add_argument("--variant", choices=["martingale", "iid_simulator"], default="martingale")
    bound.add_argument("-v", "--verbose", action="store_true")
    bound.set_defaults(func=_cmd_bound)

    ver = sub.add_parser("version")
    ver.set_defaults(func=lambda args: print(__version__) or EXIT_OK)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except RlaoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG if isinstance(exc, (ConfigError, ValueError)) else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
