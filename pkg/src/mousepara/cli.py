"""Command-line entry point.

Subcommands mirror the pipeline stages and compose through files in the
output directory:

    mousepara synth       --config run.json [--out DIR --seed N]
    mousepara extract     --config run.json
    mousepara personalize --config run.json
    mousepara evaluate    --config run.json [--workers N]
    mousepara importance  --config run.json
    mousepara report      --config run.json

Exit codes: 0 success, 1 validation/config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from mousepara.corrections import CORRECTION_MODES
from mousepara.pipeline import (
    ConfigError,
    LEAKAGE_FOLD_LOCAL,
    LEAKAGE_GLOBAL,
    RunConfig,
    run_evaluate,
    run_extract,
    run_importance,
    run_personalize,
    run_report,
    run_synth,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

_STAGES = {
    "synth": run_synth,
    "extract": run_extract,
    "personalize": run_personalize,
    "evaluate": run_evaluate,
    "importance": run_importance,
    "report": run_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mousepara", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _STAGES:
        cmd = sub.add_parser(name, help=f"run the {name} stage")
        cmd.add_argument("--config", help="JSON run configuration file")
        cmd.add_argument("--seed", type=int, help="override the root seed")
        cmd.add_argument("--workers", type=int, help="parallel workers for CV cells")
        cmd.add_argument("--out", help="override the output directory")
        cmd.add_argument(
            "--thresholds", help="comma-separated hover thresholds in ms (e.g. 250,500)"
        )
        cmd.add_argument(
            "--personalization",
            choices=CORRECTION_MODES,
            help="restrict to one personalization mode",
        )
        cmd.add_argument(
            "--leakage", choices=(LEAKAGE_FOLD_LOCAL, LEAKAGE_GLOBAL), help="correction refit policy"
        )
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.from_file(args.config) if args.config else RunConfig.from_dict({})
    if args.seed is not None:
        config.seed = args.seed
    if args.workers is not None:
        config.workers = args.workers
    if args.out is not None:
        config.out_dir = args.out
    if args.thresholds is not None:
        try:
            config.thresholds = [int(v) for v in args.thresholds.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad --thresholds value: {exc}") from exc
    if args.personalization is not None:
        config.personalization = [args.personalization]
    if args.leakage is not None:
        config.leakage = args.leakage
    config.validate()
    return config


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        outcome = _STAGES[args.command](config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"{args.command} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if args.command == "report":
        print(outcome.pop("text", ""), end="")
    print(json.dumps(outcome, indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
