"""Command line entry point: ``actionnoise run | verify | list-presets``.

Exit codes: 0 success, 1 a verification check failed, 2 bad configuration.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path

from .config import ConfigError, load_plan, parse_plan

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def default_threads() -> int:
    if hasattr(os, "sched_getaffinity"):
        return len(os.sched_getaffinity(0))
    return os.cpu_count() or 1


def preset_names():
    root = resources.files("actionnoise") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def preset_text(name: str) -> str:
    return (resources.files("actionnoise") / "presets" / f"{name}.cfg").read_text()


def _load(target: str):
    """A config path, or the bare name of a shipped preset."""
    if Path(target).is_file():
        return load_plan(target)
    if target in preset_names():
        return parse_plan(preset_text(target))
    raise ConfigError(f"no such config file or preset: {target!r}")


def cmd_run(args) -> int:
    from .runner import run_plan

    try:
        plan = _load(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    outcome = run_plan(plan, args.output, workers=max(1, args.threads))
    for f in outcome.files:
        print(f)
    print(outcome.manifest)
    if outcome.n_failed:
        print(f"{outcome.n_failed} of {outcome.n_points} points failed; see the error column",
              file=sys.stderr)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .acceptance import CHECKS, QUICK, as_report, run_checks

    numbers = sorted(CHECKS) if args.full else QUICK
    results = run_checks(numbers, on_result=lambda r: print(r.line(), flush=True))
    report = as_report(results)
    report["level"] = "full" if args.full else "quick"
    if args.report == "-":
        print(json.dumps(report, indent=2))
    elif args.report:
        Path(args.report).write_text(json.dumps(report, indent=2) + "\n")
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_list_presets(args) -> int:
    for name in preset_names():
        plan = parse_plan(preset_text(name))
        print(f"{name:6s} {plan.system:3s} {','.join(plan.protocols):20s} {plan.description}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="actionnoise",
                                     description="Adiabatic protocols under action noise.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="evaluate a sweep plan and write CSVs plus a manifest")
    run.add_argument("config", help="path to an INI plan, or a preset name")
    run.add_argument("--threads", type=int, default=default_threads(),
                     help="worker processes (default: available CPUs)")
    run.add_argument("--output", default=None,
                     help="output root (default: $ACTIONNOISE_OUTPUT_DIR or ./actionnoise-output)")
    run.set_defaults(func=cmd_run)

    verify = sub.add_parser("verify", help="run the acceptance checks")
    verify.add_argument("--full", action="store_true",
                        help="include the Monte-Carlo, Fock-oracle and sweep checks")
    verify.add_argument("--report", metavar="PATH",
                        help="write a JSON report to PATH ('-' for stdout)")
    verify.set_defaults(func=cmd_verify)

    presets = sub.add_parser("list-presets", help="list the shipped sweep plans")
    presets.set_defaults(func=cmd_list_presets)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
