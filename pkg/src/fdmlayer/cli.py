"""Command line entry point ``fdmlayer``.

``fdmlayer <scenario> [options]`` runs a scenario from its defaults
(optionally overridden by ``--config``); ``fdmlayer run <config>`` runs a
config file that names its scenario; ``fdmlayer defaults <scenario>`` prints
the resolved default configuration.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import (SCENARIOS, U64_MAX, ConfigError, dump_config, merge_config, parse_config,
                     validate_config)
from .scenarios import EXIT_CONFIG, run_scenario


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value <= U64_MAX:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _non_negative(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return value


def _run_options(p: argparse.ArgumentParser, config_flag: bool) -> None:
    if config_flag:
        p.add_argument("--config", type=Path, help="YAML file overriding the scenario defaults")
    p.add_argument("--output", type=Path, default=None, help="output directory (default: ./runs/<scenario>)")
    p.add_argument("--seed", type=_u64, default=None, help="RNG seed (unsigned 64-bit)")
    p.add_argument("--threads", type=_positive, default=None, help="FFT worker threads")
    p.add_argument("--snapshot-every", type=_non_negative, default=None, help="steps between snapshots")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fdmlayer", description="Layer field dislocation mechanics simulator.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    run = sub.add_parser("run", help="run a config file that names its scenario")
    run.add_argument("config_file", type=Path)
    _run_options(run, config_flag=False)
    show = sub.add_parser("defaults", help="print the default config of a scenario")
    show.add_argument("scenario", choices=SCENARIOS)
    for name in SCENARIOS:
        p = sub.add_parser(name, help=f"run the {name} scenario")
        _run_options(p, config_flag=True)
    return parser


def _overrides(args) -> dict:
    out = {}
    if args.seed is not None:
        out["seed"] = args.seed
    if args.threads is not None:
        out["threads"] = args.threads
    if args.snapshot_every is not None:
        out["output"] = {"snapshot_every": args.snapshot_every}
    return out


def _load(path: Path | None, scenario: str | None):
    if path is None:
        return validate_config({}, scenario)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"config: cannot read {path} ({exc.strerror})"]) from None
    return parse_config(text, scenario)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "defaults":
        sys.stdout.write(dump_config(validate_config({}, args.scenario)))
        return 0
    try:
        if args.command == "run":
            cfg = _load(args.config_file, None)
        else:
            cfg = _load(args.config, args.command)
        extra = _overrides(args)
        if extra:
            cfg = validate_config(merge_config(cfg.model_dump(exclude_none=True), extra))
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    output = args.output if args.output is not None else Path("runs") / cfg.scenario
    result = run_scenario(cfg, output)
    print(f"{cfg.scenario}: {result.status} after {result.summary['steps']} steps -> {output}")
    if result.status != "completed":
        print(result.summary.get("message", ""), file=sys.stderr)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
