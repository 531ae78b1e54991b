"""Command-line entry point: ``dcop-lab run | optima | report``."""
from __future__ import annotations

import argparse
import sys

from .experiment import (
    CONFIG_KEYS,
    DEFAULT_OPTIMA_RESOLUTION,
    build_config,
    compute_optima_command,
    load_config,
    render_reports,
    run_experiment,
)
from .problems import ConfigurationError, DynamicParams, InfeasiblePeriodError

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dcop-lab")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment grid")
    run.add_argument("--config", help="flat 'section.key = value' file")
    run.add_argument("--problems", nargs="+")
    run.add_argument("--mechanisms", nargs="+")
    run.add_argument("--runs", type=int)
    run.add_argument("--seed", type=int, help="base seed; run i uses seed + i")
    run.add_argument("--out", help="output directory")
    run.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help=f"override any config key ({', '.join(CONFIG_KEYS)})",
    )

    opt = sub.add_parser("optima", help="compute the reference optima table")
    opt.add_argument("--instances", nargs="+", required=True)
    opt.add_argument("--resolution", type=int, default=DEFAULT_OPTIMA_RESOLUTION)
    opt.add_argument("--out", required=True)

    rep = sub.add_parser("report", help="re-render tables and plot data")
    rep.add_argument("--dir", required=True)
    return p


def _overrides(args) -> dict[str, str]:
    values: dict[str, str] = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigurationError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = value.strip()
    if args.problems:
        values["experiment.problems"] = ",".join(args.problems)
    if args.mechanisms:
        values["experiment.mechanisms"] = ",".join(args.mechanisms)
    if args.runs is not None:
        values["experiment.runs"] = str(args.runs)
    if args.seed is not None:
        values["experiment.base_seed"] = str(args.seed)
    if args.out:
        values["experiment.out_dir"] = args.out
    return values


def _run(args) -> int:
    overrides = _overrides(args)
    config = load_config(args.config, overrides) if args.config else build_config(overrides)
    outcome = run_experiment(config)
    print(f"{outcome.completed} run(s) written to {outcome.out_dir}")
    if outcome.partial:
        for f in outcome.failures:
            print(f"failed: {f['instance']} {f['mechanism']} run {f['run']}: {f['error']}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            return _run(args)
        if args.command == "optima":
            digest = compute_optima_command(args.instances, args.resolution, args.out, DynamicParams())
            print(f"{args.out} sha256={digest}")
            return EXIT_OK
        for path in render_reports(args.dir):
            print(path)
        return EXIT_OK
    except (ConfigurationError, InfeasiblePeriodError) as exc:
        print(f"dcop-lab: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
