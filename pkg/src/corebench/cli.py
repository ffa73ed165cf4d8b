"""Command-line interface.

Exit codes: 0 when a run completed (or a command succeeded), 2 when the
scenario or its inputs are invalid, 3 when a run was aborted. The
``COREBENCH_LOG`` environment variable sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from corebench.datasets import (
    DatasetError, aggregate_cell_series, aggregate_neighbors, classify_cells, derive_service_mix,
    load_trace_profile, read_cell_records, read_service_volumes, write_cell_series,
)
from corebench.emulator.transport import TargetUnreachable
from corebench.kinds import VnfKind
from corebench.orchestrator import DatasetMissing, InsufficientArrivals, load_result, run_experiment
from corebench.reporting import EmptyPhase, GroupBy, PlotKind, emit_plot_data, summarize_exports
from corebench.scenario import ScenarioError, load_scenario, validate_scenario

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_ABORTED = 3

logger = logging.getLogger("corebench")


def _configure_logging() -> None:
    level = os.environ.get("COREBENCH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _load(path: str):
    try:
        return load_scenario(path)
    except (OSError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None


def cmd_validate(args) -> int:
    s = _load(args.scenario)
    if s is None:
        return EXIT_INVALID
    report = validate_scenario(s)
    for v in report.violations:
        print(v)
    if report.ok:
        print(f"{s.name}: ok")
        return EXIT_OK
    return EXIT_INVALID


def cmd_run(args) -> int:
    s = _load(args.scenario)
    if s is None:
        return EXIT_INVALID
    if args.seed is not None:
        s = s.model_copy(update={"seed": args.seed})
    report = validate_scenario(s)
    if not report.ok:
        for v in report.violations:
            print(v, file=sys.stderr)
        return EXIT_INVALID
    try:
        result = run_experiment(s, transport=args.transport, base_dir=Path(args.scenario).parent,
                                out_dir=args.out, export_schedule=args.export_schedule,
                                export_tap=not args.no_tap)
    except (DatasetMissing, InsufficientArrivals, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except TargetUnreachable as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORTED
    ok = sum(1 for o in result.outcomes if o.status.value == "Success")
    print(f"{s.name}: {result.exit}; {ok}/{len(result.outcomes)} requests succeeded; "
          f"{result.up_stats.sessions} user-plane sessions; results in {args.out}")
    return EXIT_OK if result.exit.completed else EXIT_ABORTED


def cmd_ingest(args) -> int:
    try:
        if args.what == "cells":
            records = (r for path in args.input for r in read_cell_records(path))
            series = aggregate_cell_series(records, args.interval_s, skip_negative=args.skip_negative)
            if args.neighbors:
                cells = args.neighbors.split(",")
                combined = aggregate_neighbors(series, cells)
                series = {"+".join(sorted(combined.cell_ids)): combined}
            write_cell_series(series, args.out)
            classes = classify_cells(series)
            for cell in sorted(classes):
                print(f"{cell},{classes[cell].value},{series[cell].total!r}")
        elif args.what == "mix":
            mix = derive_service_mix(read_service_volumes(args.input[0]))
            Path(args.out).write_text(json.dumps(mix.entries, indent=2, sort_keys=True) + "\n")
            print(f"{len(mix.entries)} services written to {args.out}")
        else:
            for path in args.input:
                p = load_trace_profile(path)
                print(f"{p.service}: {len(p)} bins of {p.bin_s}s, "
                      f"{int(p.uplink_bytes.sum())} B up, {int(p.downlink_bytes.sum())} B down")
    except (OSError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        if args.what == "summary":
            table = summarize_exports(args.result, args.group_by, args.levels, VnfKind(args.vnf))
            text = table.to_csv(args.out)
            if args.out is None:
                print(text, end="")
        else:
            vnfs = [VnfKind(v) for v in args.vnfs.split(",")] if args.vnfs else None
            paths = emit_plot_data([load_result(d) for d in args.result], args.kind, args.out, vnfs)
            for p in paths:
                print(p)
    except (OSError, EmptyPhase, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corebench", description="5G core benchmarking toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and export its results")
    run.add_argument("--scenario", required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--transport", choices=["inproc", "tcp"], default="inproc")
    run.add_argument("--export-schedule", action="store_true", help="also write the arrival schedules")
    run.add_argument("--no-tap", action="store_true", help="skip the per-message tap.csv")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="check a scenario without running it")
    val.add_argument("--scenario", required=True)
    val.set_defaults(func=cmd_validate)

    ing = sub.add_parser("ingest", help="convert dataset files")
    ing.add_argument("what", choices=["cells", "mix", "profile"])
    ing.add_argument("--input", nargs="+", required=True)
    ing.add_argument("--out")
    ing.add_argument("--interval-s", type=int, default=600)
    ing.add_argument("--neighbors", help="comma-separated cells to sum into one series")
    ing.add_argument("--skip-negative", action="store_true")
    ing.set_defaults(func=cmd_ingest)

    rep = sub.add_parser("report", help="summaries and plot data from exported results")
    rep.add_argument("what", choices=["summary", "plots"])
    rep.add_argument("--result", nargs="+", required=True)
    rep.add_argument("--group-by", choices=[g.value for g in GroupBy], default=GroupBy.SERVICE.value)
    rep.add_argument("--levels", type=int, nargs="+")
    rep.add_argument("--vnf", default=VnfKind.UPF.value, choices=[v.value for v in VnfKind])
    rep.add_argument("--kind", choices=[k.value for k in PlotKind], default=PlotKind.CPU_MEM_OVER_TIME.value)
    rep.add_argument("--vnfs")
    rep.add_argument("--out")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "ingest" and args.what in ("cells", "mix") and not args.out:
        parser.error(f"ingest {args.what} needs --out")
    if args.command == "report" and args.what == "plots" and not args.out:
        parser.error("report plots needs --out")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
