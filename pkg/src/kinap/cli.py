"""Command line interface: run scenarios, compare runs, list presets."""

from __future__ import annotations

import argparse
import sys

from .errors import CGConvergenceError, ConfigError, KinapError, StepFailureError
from .harness import (
    PRESETS,
    compare,
    format_report,
    load_scenario,
    report_json,
    run,
)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_STEP = 3
EXIT_COMPARE = 4


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="kinap",
        description="Asymptotic-preserving kinetic solvers and plasma "
                    "moment-system schemes",
    )
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="run a scenario from a config file or preset")
    pr.add_argument("config", nargs="?", help="config file path")
    pr.add_argument("--preset", help="built-in scenario name")
    pr.add_argument("--out", default=None, help="output directory")
    pr.add_argument("--solver", choices=["MM", "FJ", "JY", "DS", "EULER"])
    pr.add_argument("--eps", type=float, help="constant Knudsen number override")
    pr.add_argument("--order", type=int, choices=[1, 2])
    pr.add_argument("--beta-choice", type=int, choices=[1, 2])
    pr.add_argument("--t-end", type=float, help="end time override")

    pc = sub.add_parser("compare", help="compare two run directories")
    pc.add_argument("dir_a")
    pc.add_argument("dir_b")
    pc.add_argument("--json", action="store_true", help="print JSON instead of text")

    sub.add_parser("presets", help="list built-in scenarios")
    return p


def cmd_run(args) -> int:
    if bool(args.config) == bool(args.preset):
        print("run needs exactly one of <config-file> or --preset", file=sys.stderr)
        return EXIT_CONFIG
    sc = load_scenario(args.preset if args.preset else args.config)
    if args.solver:
        sc.solver = args.solver
    if args.eps is not None:
        sc.eps = args.eps
        sc.eps_profile = "constant"
    if args.order is not None:
        sc.order = args.order
    if args.beta_choice is not None:
        sc.beta_choice = args.beta_choice
    if args.t_end is not None:
        sc.t_end = args.t_end
        if not sc.snapshots or max(sc.snapshots) > sc.t_end:
            sc.snapshots = (sc.t_end,)
    sc.validate()
    result = run(sc, out_dir=args.out)
    last_t = result.diag["t"][-1] if result.diag["t"] else 0.0
    where = args.out if args.out else "(no output directory)"
    print(f"{sc.name}: solver={sc.solver} equation={sc.equation} "
          f"reached t={last_t:g}; outputs in {where}")
    return EXIT_OK


def cmd_compare(args) -> int:
    report = compare(args.dir_a, args.dir_b)
    print(report_json(report) if args.json else format_report(report))
    return EXIT_OK


def cmd_presets() -> int:
    width = max(len(k) for k in PRESETS)
    for name in sorted(PRESETS):
        sc = PRESETS[name]
        print(f"{name:{width}s}  equation={sc.equation:14s} nx={sc.nx:<4d} "
              f"nv={sc.nv:<3d} eps={sc.eps:g} profile={sc.eps_profile} "
              f"t_end={sc.t_end:g}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "compare":
            try:
                return cmd_compare(args)
            except ConfigError as exc:
                print(f"compare error: {exc}", file=sys.stderr)
                return EXIT_COMPARE
        if args.command == "presets":
            return cmd_presets()
        return EXIT_INTERNAL
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StepFailureError, CGConvergenceError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_STEP
    except KinapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
