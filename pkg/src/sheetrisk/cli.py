"""``sheetrisk`` command line: scan, assess, report, diff, graph.

Exit codes: 0 clean, 2 violations present, 1 errors. Failures print a
JSON error object on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from sheetrisk import __version__
from sheetrisk.config import REPORT_FORMATS, PipelineConfig, load_config
from sheetrisk.discovery import discover
from sheetrisk.errors import ConfigError, SheetRiskError
from sheetrisk.inventory import diff, last_scan_time, latest_snapshot_path, load_snapshot
from sheetrisk.linkgraph import build_graph
from sheetrisk.pipeline import EXIT_CLEAN, EXIT_ERROR, EXIT_VIOLATIONS, render_reports, run_pipeline

log = logging.getLogger("sheetrisk")


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", type=Path, default=default, help="pipeline configuration file (YAML or JSON)")
    parser.add_argument("--out-dir", type=Path, default=default, help="override the configured report directory")
    parser.add_argument("--since-last-scan", action="store_true",
                        default=argparse.SUPPRESS if suppress else False,
                        help="only re-read files modified after the latest catalog snapshot")
    parser.add_argument("--format", action="append", choices=REPORT_FORMATS, default=default,
                        help="report format; repeat for several (default: all configured)")
    parser.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS if suppress else 0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sheetrisk", description="Spreadsheet inventory and risk assessment.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        return p

    add("scan", "discovery only; prints one JSON record per workbook")
    add("assess", "full pipeline: discover, score, save snapshot, diff, render reports")
    p = add("report", "re-render reports from a saved snapshot")
    p.add_argument("snapshot", type=Path)
    p.add_argument("--previous", type=Path, help="snapshot to diff against (violations report)")
    p = add("diff", "compare two snapshots")
    p.add_argument("previous", type=Path)
    p.add_argument("current", type=Path)
    p = add("graph", "export the link-graph edge list of a snapshot")
    p.add_argument("snapshot", type=Path, nargs="?", help="default: latest snapshot in the catalog")
    return parser


def _config(args) -> PipelineConfig:
    if args.config is None:
        raise ConfigError("config-invalid", "--config is required for this command")
    config = load_config(args.config)
    changes = {}
    if args.out_dir is not None:
        changes["output_dir"] = args.out_dir.absolute()
    if args.format:
        changes["report_formats"] = tuple(dict.fromkeys(args.format))
    return dataclasses.replace(config, **changes) if changes else config


def _print_json(obj) -> None:
    print(json.dumps(obj, sort_keys=True, ensure_ascii=False))


def cmd_scan(args) -> int:
    config = _config(args)
    incremental = args.since_last_scan or config.filter.since_last_scan
    last = last_scan_time(config.catalog_dir) if incremental else None
    scan_filter = dataclasses.replace(config.filter, since_last_scan=incremental)
    records, errors = discover(config.roots, scan_filter, last, limits=config.archive, workers=config.workers)
    for rec in records:
        _print_json(rec.to_dict())
    for err in errors:
        print(json.dumps(err.to_dict(), sort_keys=True), file=sys.stderr)
    return EXIT_CLEAN


def cmd_assess(args) -> int:
    result = run_pipeline(_config(args), since_last_scan=args.since_last_scan or None)
    out = dict(result.bundle.summary)
    out["snapshot"] = str(result.snapshot_path)
    out["violations"] = result.diff.newly_high_risk
    _print_json(out)
    return result.exit_code


def cmd_report(args) -> int:
    if args.config is not None:
        config = _config(args)
        out_dir, formats = config.output_dir, config.report_formats
    else:
        if args.out_dir is None:
            raise ConfigError("config-invalid", "report needs --out-dir or --config")
        out_dir, formats = args.out_dir, tuple(args.format or REPORT_FORMATS)
    snapshot = load_snapshot(args.snapshot)
    report = diff(load_snapshot(args.previous), snapshot) if args.previous else None
    bundle = render_reports(snapshot, report, formats, out_dir)
    _print_json({"written": [str(p) for p in bundle.paths]})
    return EXIT_VIOLATIONS if report is not None and report.newly_high_risk else EXIT_CLEAN


def cmd_diff(args) -> int:
    report = diff(load_snapshot(args.previous), load_snapshot(args.current))
    _print_json(report.to_dict())
    return EXIT_VIOLATIONS if report.newly_high_risk else EXIT_CLEAN


def cmd_graph(args) -> int:
    path = args.snapshot
    if path is None:
        path = latest_snapshot_path(_config(args).catalog_dir)
        if path is None:
            raise SheetRiskError("no-snapshot", "catalog holds no snapshots")
    snapshot = load_snapshot(path)
    graph = build_graph([e.record for e in snapshot.entries],
                        {e.identity: list(e.external_targets) for e in snapshot.entries})
    print("feeder\tdependent\tfeeder_status")
    for line in graph.edge_lines():
        print(line)
    return EXIT_CLEAN


COMMANDS = {"scan": cmd_scan, "assess": cmd_assess, "report": cmd_report, "diff": cmd_diff, "graph": cmd_graph}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except SheetRiskError as exc:
        print(json.dumps(exc.to_dict(), sort_keys=True), file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(json.dumps({"error": "io-error", "messages": [str(exc)]}), file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
