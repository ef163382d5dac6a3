"""Command line interface.

    ucwave <subcommand> --config config.json --out results/

Subcommands: check-geometry, convergence, region-sweep, noise, worst-mode,
trace, cm-study. Outputs report.json and table.csv into the output directory.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .exceptions import ConfigurationError, NumericalError, UcwaveError
from .experiments import (
    load_config,
    run_cm_study,
    run_convergence,
    run_geometry_check,
    run_region_sweep,
    run_trace_experiment,
    run_worst_mode_study,
)

_SUBCOMMANDS = (
    "check-geometry",
    "convergence",
    "region-sweep",
    "noise",
    "worst-mode",
    "trace",
    "cm-study",
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ucwave",
        description=(
            "Stabilized primal-dual space-time FEM for unique continuation"
            " of the 1D wave equation from interior data"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--out", required=True, help="output directory")
    return parser


def _read_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file is not valid JSON: {exc}") from exc


def _dispatch(command: str, config: dict):
    if command == "check-geometry":
        return run_geometry_check(config)
    if command == "convergence":
        return run_convergence(config)
    if command == "region-sweep":
        return run_region_sweep(config)
    if command == "noise":
        merged = load_config(config)
        if merged["experiment"]["noise"]["kind"] == "none":
            merged["experiment"]["noise"]["kind"] = "smooth"
        return run_convergence(merged)
    if command == "worst-mode":
        return run_worst_mode_study(config)
    if command == "trace":
        return run_trace_experiment(config)
    if command == "cm-study":
        return run_cm_study(config)
    raise ConfigurationError(f"unknown subcommand {command!r}")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _read_config(args.config)
        report = _dispatch(args.command, config)
        report.save(args.out)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except UcwaveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for line in _summary_lines(report):
        print(line)
    print(f"wrote {args.out}/report.json and {args.out}/table.csv")
    return 0


def _summary_lines(report) -> list[str]:
    lines = [f"{report.kind}: {report.solution_id or 'n/a'}"]
    for i, lv in enumerate(report.levels):
        errs = ", ".join(
            f"{k}={v:.3e}" for k, v in sorted(lv["errors"].items())
            if not k.endswith("_raw")
        )
        lines.append(f"  level {i}: h={lv['h']:.4g} {errs}")
    for col, rates in sorted(report.eoc_table.items()):
        if col.endswith("_raw"):
            continue
        lines.append(f"  eoc[{col}]: " + ", ".join(f"{r:.2f}" for r in rates))
    return lines


if __name__ == "__main__":
    sys.exit(main())
