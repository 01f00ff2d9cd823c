"""Command line interface

Subcommands:
- run <config|dir>: run one experiment, or every config below a directory
- validate <config|dir>: parse and validate without simulating
- plot <report.json>: re-emit the CSV plot data of a written report

Exit codes: 0 when every criterion passes, 1 when any fails, 2 on a
configuration or runtime error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from rwre_harness.errors import ConfigError
from rwre_harness.parser import ConfigParser
from rwre_harness.resolver import ConfigResolver
from rwre_harness.runner import ExperimentRunner, emit_plot_data, load_report
from rwre_lab import __version__
from rwre_lab.errors import RWREError

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_ERROR = 2


def _configure_logging(verbose: bool, quiet: bool):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(level)
    logging.captureWarnings(True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rwre-lab",
        description="Reproducible Monte Carlo experiments for random walks in random environment",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="Log at DEBUG level")
    parser.add_argument("-q", "--quiet", action="store_true", help="Log warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run an experiment config (or a directory of configs)")
    run.add_argument("target", type=Path, help="Config file or directory")
    run.add_argument(
        "--workers", type=int, default=None,
        help="Worker processes (overrides $RWRE_WORKERS; default 1)",
    )
    run.add_argument("--no-write", action="store_true", help="Do not write report files")

    validate = sub.add_parser("validate", help="Validate configs without simulating")
    validate.add_argument("target", type=Path, help="Config file or directory")

    plot = sub.add_parser("plot", help="Emit long-format CSV plot data of a report")
    plot.add_argument("report", type=Path, help="JSON report written by 'run'")
    plot.add_argument("--out", type=Path, default=None, help="Output directory (default: next to the report)")
    plot.add_argument("--stem", default=None, help="File stem (default: report name)")
    return parser


def _cmd_run(args) -> int:
    runner = ExperimentRunner(workers=args.workers)
    reports = runner.run_batch(args.target, write=not args.no_write)
    failed = [path for path, report in reports.items() if not report.passed]
    for path, report in reports.items():
        print(f"{'PASS' if report.passed else 'FAIL'}  {report.name}  ({path})")
    return EXIT_FAIL if failed else EXIT_PASS


def _cmd_validate(args) -> int:
    paths = ConfigResolver().resolve(args.target)
    if not paths:
        raise ConfigError("<file>", f"no experiment configs found at {args.target}")
    parser = ConfigParser()
    for path in paths:
        config = parser.parse_file(path)
        print(f"OK  {config.name}  [{config.kind}]  ({path})")
    return EXIT_PASS


def _cmd_plot(args) -> int:
    report = load_report(args.report)
    out_dir = args.out if args.out is not None else args.report.parent
    for path in emit_plot_data(report, out_dir, args.stem):
        print(path)
    return EXIT_PASS


COMMANDS = {"run": _cmd_run, "validate": _cmd_validate, "plot": _cmd_plot}


def main(argv: Optional[List[str]] = None) -> int:
    """Command line entry point; returns the exit code"""
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose, args.quiet)
    try:
        return COMMANDS[args.command](args)
    except (RWREError, OSError, ValueError) as exc:
        logger.debug("command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:
        logger.error("unexpected %s", type(exc).__name__, exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
