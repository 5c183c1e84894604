"""Command line entry point: run a convergence study or the invariant suite."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, parse_config
from .system import SolverFailure

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nitsche-mortar",
        description="Convergence study for the stabilized Nitsche-mortar method on the split unit square.")
    parser.add_argument("--config", type=Path, help="key=value study configuration")
    parser.add_argument("--out", type=Path, help="output path (stdout if omitted)")
    parser.add_argument("--format", choices=("csv", "markdown", "both"), help="report format")
    parser.add_argument("--check", action="store_true", help="run the invariant suite instead of a study")
    return parser


def _write_report(report, fmt: str, out: Path | None) -> None:
    if out is None:
        if fmt in ("csv", "both"):
            sys.stdout.write(report.to_csv())
        if fmt == "both":
            sys.stdout.write("\n")
        if fmt in ("markdown", "both"):
            sys.stdout.write(report.to_markdown())
        return
    if fmt == "csv":
        out.write_text(report.to_csv())
    elif fmt == "markdown":
        out.write_text(report.to_markdown())
    else:
        out.with_suffix(".csv").write_text(report.to_csv())
        out.with_suffix(".md").write_text(report.to_markdown())


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.check:
        from .checks import run_checks

        results = run_checks()
        return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED

    try:
        text = args.config.read_text(encoding="utf-8") if args.config else ""
        config = parse_config(text)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        where = f"{args.config}:" if args.config else ""
        print(f"error: {where}{exc}", file=sys.stderr)
        return EXIT_CONFIG

    fmt = args.format or config.format
    out = args.out or (Path(config.output) if config.output else None)

    from .analysis import run_convergence_study

    try:
        report = run_convergence_study(config)
    except SolverFailure as exc:
        print(f"error: solver failure at {exc}", file=sys.stderr)
        return EXIT_SOLVER
    try:
        _write_report(report, fmt, out)
    except OSError as exc:
        print(f"error: cannot write report: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
