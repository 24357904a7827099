"""Command-line entry point: run scenarios, verify identities, study
convergence.

Exit codes: 0 success, 1 usage/configuration error, 2 numerical failure
(step rejection, positivity loss, solver non-convergence), 3 verification
failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import converge as converge_mod
from . import dynamics, outputs
from . import verify as verify_mod
from .models import NonPositiveDensityError
from .scenario import ScenarioError, parse_scenario

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_VERIFY = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heliflow",
        description="Dispersive-fluid simulation and conservation-law "
                    "verification on periodic grids.",
        epilog="exit codes: 0 success, 1 usage/config error, "
               "2 numerical failure, 3 verification failure")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate a scenario file")
    p_run.add_argument("scenario", help="path to a scenario TOML file")
    p_run.add_argument("--output", metavar="DIR",
                       help="output directory (overrides [output].dir)")

    p_verify = sub.add_parser(
        "verify", help="run the built-in identity verification suite")
    p_verify.add_argument("--seed", type=int, default=0,
                          help="random seed for the generated fields")
    p_verify.add_argument("--backend", default="spectral",
                          choices=("spectral", "fd2", "fd4"),
                          help="derivative backend under test")
    p_verify.add_argument("--output", metavar="DIR",
                          help="write report.json into DIR")

    p_conv = sub.add_parser(
        "converge", help="rerun a scenario at doubled resolutions")
    p_conv.add_argument("scenario", help="path to a scenario TOML file")
    p_conv.add_argument("--levels", type=int, required=True,
                        help="number of refinement levels (>= 2)")
    p_conv.add_argument("--output", metavar="DIR",
                        help="write per-level outputs under DIR")
    return parser


def _cmd_run(args) -> int:
    try:
        scn = parse_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out_dir = args.output or scn.output_dir
    if out_dir is None:
        print("error: no output directory; set [output].dir in the scenario "
              "or pass --output", file=sys.stderr)
        return EXIT_USAGE
    try:
        scn.initial_state()  # surface IC problems as config errors up front
    except (ScenarioError, NonPositiveDensityError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        result = dynamics.run(scn)
    except dynamics.SimulationAborted as exc:
        paths = outputs.write_run_outputs(out_dir, scn, exc.records, exc.state,
                                          dynamics.RunStats(),
                                          status=f"aborted: {exc}")
        print(f"run aborted at t = {exc.state.t:.6g}: {exc}", file=sys.stderr)
        print(f"partial diagnostics: {paths['diagnostics']}", file=sys.stderr)
        return EXIT_NUMERICAL
    paths = outputs.write_run_outputs(out_dir, scn, result.records,
                                      result.final_state, result.stats)
    print(f"completed: t = {result.final_state.t:.6g} in "
          f"{result.stats.steps} steps ({len(result.records)} records)")
    for name, path in sorted(paths.items()):
        print(f"  {name}: {path}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    checks = verify_mod.verify(seed=args.seed, backend=args.backend)
    for check in checks:
        print(check.line())
    passed = all(c.passed for c in checks)
    print(f"{sum(c.passed for c in checks)}/{len(checks)} checks passed "
          f"(backend {args.backend}, seed {args.seed})")
    if args.output:
        os.makedirs(args.output, exist_ok=True)
        report = {
            "seed": args.seed,
            "backend": args.backend,
            "passed": passed,
            "checks": [{"name": c.name, "passed": c.passed,
                        "requirement": c.requirement, "measured": c.measured}
                       for c in checks],
        }
        path = os.path.join(args.output, "report.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"report: {path}")
    return EXIT_OK if passed else EXIT_VERIFY


def _cmd_converge(args) -> int:
    if args.levels < 2:
        print("error: --levels must be at least 2", file=sys.stderr)
        return EXIT_USAGE
    try:
        scn = parse_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    results = converge_mod.run_levels(scn.resolved, args.levels,
                                      out_dir=args.output)
    print(converge_mod.format_table(results))
    if any(r.status != "ok" for r in results):
        return EXIT_NUMERICAL
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help and 2 for usage errors; fold the
        # latter into the usage/configuration exit code.
        return 0 if exc.code in (0, None) else EXIT_USAGE
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "verify":
        return _cmd_verify(args)
    return _cmd_converge(args)


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
