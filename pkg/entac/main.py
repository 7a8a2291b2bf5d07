"""
Command-line entry point: entac solve|train|sweep|check|summarize.

stdout carries only machine-readable output (JSON documents, or the text
report of `summarize --format text`); logging goes to stderr.

Exit codes: 0 success, 1 failures present (failed checks, aborted runs,
failed sweep jobs), 2 usage errors (bad configuration and bad MDP documents
included). Any other exception propagates with its traceback.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Optional, Sequence

from dotenv import load_dotenv

from .config import ConfigError, SweepSpec, TrainConfig, apply_env_overrides, load_config, parse_problem, read_document
from .exact import ConvergenceError, optimal_reg_values
from .mdp import InvalidMdpError, require_valid
from .harness import SweepError, SweepReport, run_sweep, summarize, with_out_dir
from .modes import CheckSuite, OutputFormat
from .store import write_json, write_trace_csv
from .trainer import run_ent_ac
from .verify import run_suite

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_USAGE = 2

DEFAULT_TRAIN_OUT = "runs/train"


def _print_json(document: Any) -> None:
    print(json.dumps(document, indent=2, sort_keys=True))


def _error(message: str) -> None:
    print(f"Error: {message}", file=sys.stderr)


def cmd_solve(args: argparse.Namespace) -> int:
    """Soft value iteration on the document's environment; prints J*, v*, pi*."""
    document = apply_env_overrides(read_document(args.config))
    env, gamma, lam = parse_problem(document)
    mdp = env.build(gamma)
    require_valid(mdp)
    try:
        optimal = optimal_reg_values(mdp, lam)
    except ConvergenceError as e:
        _error(str(e))
        return EXIT_FAILURES
    _print_json(optimal.to_dict())
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if not isinstance(config, TrainConfig):
        raise ConfigError("H_list", "train expects a train document, got a sweep document")
    if args.seed is not None:
        config = replace(config, seed=args.seed)

    out_dir = Path(args.out or DEFAULT_TRAIN_OUT)
    trace = run_ent_ac(config.build_mdp(), config)
    csv_path = write_trace_csv(trace, out_dir / f"seed-{config.seed:04d}.csv")
    summary = trace.summary()
    summary["trace_csv"] = str(csv_path)
    write_json(summary, csv_path.with_suffix(".json"))
    _print_json(summary)
    if trace.aborted is not None:
        _error(f"run aborted: {trace.aborted}")
        return EXIT_FAILURES
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    spec = load_config(args.config)
    if not isinstance(spec, SweepSpec):
        raise ConfigError("H_list", "sweep expects a sweep document (one with an H_list)")
    if args.seed is not None:
        spec = replace(spec, base_seed=args.seed)
    spec = with_out_dir(spec, args.out)
    logger.info("running sweep into %s with %d worker(s)", spec.out_dir, args.threads)
    try:
        summary = run_sweep(spec, threads=args.threads)
    except SweepError as e:
        _error(str(e))
        return EXIT_FAILURES
    _print_json(summary)
    return EXIT_FAILURES if summary["failures"] else EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    results = run_suite(args.suite, seed=0 if args.seed is None else args.seed)
    for result in results:
        if args.format is OutputFormat.TEXT:
            status = "skip" if result.skipped else ("PASS" if result.passed else "FAIL")
            print(f"{status:<4}  {result.name:<22} slack={result.slack:.3e}")
        else:
            print(result.to_json())
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILURES


def cmd_summarize(args: argparse.Namespace) -> int:
    if args.out is None:
        raise ConfigError("--out", "summarize needs the sweep directory")
    try:
        summary = summarize(Path(args.out))
    except SweepError as e:
        _error(str(e))
        return EXIT_FAILURES
    if args.format is OutputFormat.TEXT:
        SweepReport(summary).print_report()
    else:
        _print_json(summary)
    return EXIT_FAILURES if summary["failures"] or summary["errors"] else EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "check": cmd_check,
    "summarize": cmd_summarize,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="entac", description="Tabular entropy-regularized actor-critic laboratory")
    parser.add_argument("--log-level", default=None,
                        help="logging level (default: $ENTAC_LOG_LEVEL or WARNING)")
    subparsers = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str, *options: str) -> argparse.ArgumentParser:
        sub = subparsers.add_parser(name, help=help_text)
        if "config" in options:
            sub.add_argument("--config", type=Path, required=True, help="JSON configuration document")
        if "out" in options:
            sub.add_argument("--out", default=None, help="output directory")
        if "seed" in options:
            sub.add_argument("--seed", type=int, default=None, help="seed (train), base seed (sweep) or check seed")
        return sub

    add("solve", "optimal regularized values by soft value iteration", "config")
    add("train", "one actor-critic run", "config", "out", "seed")
    sweep = add("sweep", "grid-searched H sweep", "config", "out", "seed")
    sweep.add_argument("--threads", type=int, default=1, help="worker processes")
    check = add("check", "numerical inequality and identity checks", "seed")
    check.add_argument("--suite", type=CheckSuite, choices=list(CheckSuite), default=CheckSuite.ALL)
    check.add_argument("--format", type=OutputFormat, choices=list(OutputFormat), default=OutputFormat.JSON)
    summarize_parser = add("summarize", "summary of a sweep directory", "out")
    summarize_parser.add_argument("--format", type=OutputFormat, choices=list(OutputFormat),
                                  default=OutputFormat.JSON)
    return parser


def _configure_logging(level: Optional[str]) -> None:
    name = (level or os.environ.get("ENTAC_LOG_LEVEL") or "WARNING").upper()
    numeric = logging.getLevelName(name)
    if not isinstance(numeric, int):
        raise ConfigError("--log-level", f"unknown level {level!r}")
    logging.basicConfig(level=numeric, stream=sys.stderr, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments, run one subcommand and return its exit code.

    Args:
        argv: Arguments without the program name (defaults to sys.argv[1:])
    """
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _configure_logging(args.log_level)
        return COMMANDS[args.command](args)
    except (ConfigError, InvalidMdpError) as e:
        _error(str(e))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
