"""End-to-end scan: discover, parse and score, propagate, persist, diff, report."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import tempfile
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from sheetrisk.config import PipelineConfig
from sheetrisk.discovery import FileKind, FileRecord, discover, format_ts
from sheetrisk.errors import ReportError, ScanError, WorkbookError
from sheetrisk.formula import analyze
from sheetrisk.inventory import (
    DiffReport,
    InventoryEntry,
    InventorySnapshot,
    diff,
    last_scan_time,
    latest_snapshot_path,
    load_snapshot,
    new_scan_id,
    save_snapshot,
)
from sheetrisk.linkgraph import LinkGraph, build_graph, propagate_criticality
from sheetrisk.risk import RiskConfig, assess_workbook, compute_metrics
from sheetrisk.workbook import parse_workbook

log = logging.getLogger(__name__)

EXIT_CLEAN = 0
EXIT_ERROR = 1
EXIT_VIOLATIONS = 2

RISK_ORDER = {"HIGH": 0, "MEDIUM": 1, "LOW": 2}

METRIC_COLUMNS = (
    "worksheet_count", "formula_count", "formula_error_count", "array_formula_count",
    "max_if_nesting", "external_link_count", "has_macros", "named_item_count",
    "invisible_cell_count", "hidden_element_count", "very_hidden_sheet_count",
    "workbook_size_bytes", "is_password_protected", "unparsed_formula_count",
)

# Fixed column order for the inventory, high-risk and violations CSVs.
INVENTORY_COLUMNS = (
    "identity", "path", "container_chain", "kind", "extension", "extension_mismatch",
    "size_bytes", "modified_at", "content_hash", "status",
    "materiality_score", "materiality_band", "effective_materiality_band",
    "complexity_score", "complexity_band", "risk", "inherited_critical",
    "matched_materiality_rules", "matched_complexity_rules", "metrics_available",
) + METRIC_COLUMNS

STAGES = ("discover", "parse-and-score", "link-graph", "save-snapshot", "diff", "render-reports")


def _stage(n: int, detail: str = "") -> None:
    log.info("stage %d/%d %s%s", n, len(STAGES), STAGES[n - 1], f": {detail}" if detail else "")


# -- per-file work -------------------------------------------------------------

def evaluate_record(record: FileRecord, risk: RiskConfig) -> tuple[InventoryEntry, Optional[ScanError]]:
    """Parse, measure and score one discovered workbook.

    Unreadable content degrades to an unavailable metrics profile; the
    record stays in the inventory and the failure is returned alongside.
    """
    facts, status, error = None, "ok", None
    try:
        facts = parse_workbook(record)
    except WorkbookError as exc:
        status = exc.code
        error = ScanError(exc.code, record.path, record.container_chain, "; ".join(exc.messages))
    if facts is not None and facts.encrypted:
        status = "encrypted"
    analyses = [analyze(f.text) for f in facts.formulas] if facts is not None and not facts.encrypted else []
    profile = compute_metrics(facts, analyses, size_bytes=record.size_bytes)
    assessment = assess_workbook(record, facts, profile, risk)
    targets = tuple(facts.external_targets) if facts is not None else ()
    return InventoryEntry(record, profile, assessment, targets, status), error


def _rebase(entry: InventoryEntry, risk: RiskConfig) -> InventoryEntry:
    """Drop previously inherited criticality so propagation starts clean."""
    a = entry.assessment
    if not a.inherited_critical:
        return entry
    base = replace(a, inherited_critical=False, effective_materiality_band=a.materiality_band,
                   risk=risk.matrix.lookup(a.materiality_band, a.complexity_band))
    return replace(entry, assessment=base)


def _still_present(record: FileRecord) -> bool:
    return os.path.isfile(record.path)


def link_and_propagate(entries: Sequence[InventoryEntry], risk: RiskConfig) -> tuple[list[InventoryEntry], LinkGraph]:
    graph = build_graph(
        [e.record for e in entries],
        {e.identity: [(t, "external-part") for t in e.external_targets] for e in entries},
    )
    assessments = propagate_criticality(
        graph, {e.identity: e.assessment for e in entries}, risk.matrix, risk.materiality_scale.top
    )
    return [replace(e, assessment=assessments[e.identity]) for e in entries], graph


# -- reports -----------------------------------------------------------------

def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return "" if value is None else str(value)


def inventory_row(entry: InventoryEntry) -> dict:
    r, a, p = entry.record, entry.assessment, entry.profile
    row = {
        "identity": r.identity,
        "path": r.path,
        "container_chain": "!".join(r.container_chain),
        "kind": r.kind.value,
        "extension": r.extension,
        "extension_mismatch": r.extension_mismatch,
        "size_bytes": r.size_bytes,
        "modified_at": format_ts(r.modified_at),
        "content_hash": r.content_hash,
        "status": entry.status,
        "materiality_score": a.materiality_score,
        "materiality_band": a.materiality_band,
        "effective_materiality_band": a.effective_materiality_band,
        "complexity_score": a.complexity_score,
        "complexity_band": a.complexity_band,
        "risk": a.risk,
        "inherited_critical": a.inherited_critical,
        "matched_materiality_rules": ";".join(a.matched_materiality_rule_ids),
        "matched_complexity_rules": ";".join(a.matched_complexity_rule_ids),
        "metrics_available": p.metrics_available,
    }
    for name in METRIC_COLUMNS:
        row[name] = getattr(p, name)
    return row


def report_order(entries: Sequence[InventoryEntry]) -> list[InventoryEntry]:
    """HIGH first, then materiality score descending, then path ascending."""
    return sorted(
        entries,
        key=lambda e: (RISK_ORDER.get(e.assessment.risk, 3), -e.assessment.materiality_score, e.record.sort_key),
    )


def duplicate_groups(entries: Sequence[InventoryEntry]) -> list[list[str]]:
    groups: dict[str, list[str]] = defaultdict(list)
    for e in entries:
        if e.record.content_hash:
            groups[e.record.content_hash].append(e.identity)
    return sorted(sorted(ids) for ids in groups.values() if len(ids) > 1)


def build_summary(snapshot: InventorySnapshot, report: Optional[DiffReport]) -> dict:
    entries = snapshot.entries
    risk = Counter(e.assessment.risk for e in entries)
    kinds = Counter(e.record.kind.value for e in entries)
    errors = Counter(e.code for e in snapshot.errors)
    return {
        "scan_id": snapshot.scan_id,
        "started_at": format_ts(snapshot.started_at),
        "finished_at": format_ts(snapshot.finished_at),
        "record_count": len(entries),
        "risk_counts": {k: risk.get(k, 0) for k in ("HIGH", "MEDIUM", "LOW")},
        "kind_counts": {k.value: kinds.get(k.value, 0) for k in FileKind if k.is_spreadsheet},
        "status_counts": dict(sorted(Counter(e.status for e in entries).items())),
        "error_counts": dict(sorted(errors.items())),
        "error_total": len(snapshot.errors),
        "duplicate_hash_groups": duplicate_groups(entries),
        "diff": {k: len(v) for k, v in report.to_dict().items()} if report is not None else None,
    }


def _summary_rows(summary: dict) -> list[tuple[str, str]]:
    rows = [("scan_id", summary["scan_id"]), ("started_at", summary["started_at"]),
            ("finished_at", summary["finished_at"]), ("record_count", str(summary["record_count"]))]
    for group in ("risk_counts", "kind_counts", "status_counts", "error_counts"):
        prefix = group[: -len("_counts")]
        rows += [(f"{prefix}.{k}", str(v)) for k, v in summary[group].items()]
    rows.append(("error_total", str(summary["error_total"])))
    rows.append(("duplicate_hash_groups", str(len(summary["duplicate_hash_groups"]))))
    if summary["diff"] is not None:
        rows += [(f"diff.{k}", str(v)) for k, v in summary["diff"].items()]
    return rows


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _jsonl_text(objs) -> str:
    return "".join(json.dumps(o, sort_keys=True, ensure_ascii=False) + "\n" for o in objs)


def _write_atomic(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class ReportBundle:
    inventory: list[dict] = field(default_factory=list)
    high_risk: list[dict] = field(default_factory=list)
    violations: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    edges: list[str] = field(default_factory=list)
    paths: list[Path] = field(default_factory=list)


def build_bundle(snapshot: InventorySnapshot, report: Optional[DiffReport],
                 graph: Optional[LinkGraph] = None) -> ReportBundle:
    if graph is None:
        graph = build_graph(
            [e.record for e in snapshot.entries],
            {e.identity: list(e.external_targets) for e in snapshot.entries},
        )
    ordered = report_order(snapshot.entries)
    violating = set(report.newly_high_risk) if report is not None else set()
    return ReportBundle(
        inventory=[inventory_row(e) for e in ordered],
        high_risk=[inventory_row(e) for e in ordered if e.assessment.risk == "HIGH"],
        violations=[inventory_row(e) for e in ordered if e.identity in violating],
        summary=build_summary(snapshot, report),
        edges=graph.edge_lines(),
    )


def render_reports(snapshot: InventorySnapshot, report: Optional[DiffReport],
                   formats: Sequence[str], output_dir, graph: Optional[LinkGraph] = None) -> ReportBundle:
    """Write the report files and return the bundle with ``paths`` filled in.

    Only ``summary.*`` carries scan ids and times, so the other files are
    byte-identical across rescans of an unchanged tree.
    """
    out = Path(output_dir)
    bundle = build_bundle(snapshot, report, graph)
    files: dict[str, str] = {}
    if "csv" in formats:
        for name in ("inventory", "high_risk", "violations"):
            rows = getattr(bundle, name)
            files[f"{name}.csv"] = _csv_text(INVENTORY_COLUMNS, ([r[c] for c in INVENTORY_COLUMNS] for r in rows))
        files["summary.csv"] = _csv_text(("key", "value"), _summary_rows(bundle.summary))
    if "structured" in formats:
        by_id = snapshot.by_identity
        ordered = [by_id[r["identity"]] for r in bundle.inventory]
        files["inventory.jsonl"] = _jsonl_text(e.to_dict() for e in ordered)
        files["high_risk.jsonl"] = _jsonl_text(
            e.to_dict() for e in ordered if e.assessment.risk == "HIGH")
        violating = {r["identity"] for r in bundle.violations}
        files["violations.jsonl"] = _jsonl_text(e.to_dict() for e in ordered if e.identity in violating)
        files["summary.json"] = json.dumps(bundle.summary, indent=2, sort_keys=True) + "\n"
        if report is not None:
            files["diff.json"] = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    files["edges.tsv"] = "feeder\tdependent\tfeeder_status\n" + "".join(line + "\n" for line in bundle.edges)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            _write_atomic(out / name, text)
    except OSError as exc:
        raise ReportError("report-write-failed", f"{out}: {exc}") from exc
    bundle.paths = [out / name for name in files]
    return bundle


# -- orchestration -----------------------------------------------------------

@dataclass
class PipelineResult:
    snapshot: InventorySnapshot
    diff: DiffReport
    bundle: ReportBundle
    graph: LinkGraph
    snapshot_path: Path
    exit_code: int


def run_pipeline(config: PipelineConfig, *, since_last_scan: Optional[bool] = None) -> PipelineResult:
    """Run all stages in order; each stage start is logged.

    Exit code: 2 when the diff has newly-high-risk workbooks, else 0.
    Record-level problems (unreadable files, corrupt workbooks) are
    reported in the snapshot and summary, not through the exit code;
    top-level failures raise.
    """
    started = datetime.now(timezone.utc)
    incremental = config.filter.since_last_scan if since_last_scan is None else since_last_scan
    scan_filter = replace(config.filter, since_last_scan=incremental)
    last = last_scan_time(config.catalog_dir) if incremental else None

    _stage(1, f"{len(config.roots)} root(s)" + (f", since {format_ts(last)}" if last else ""))
    records, errors = discover(config.roots, scan_filter, last, limits=config.archive, workers=config.workers)
    errors = list(errors)

    _stage(2, f"{len(records)} workbook(s)")
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        results = list(pool.map(lambda r: evaluate_record(r, config.risk), records))
    entries = [entry for entry, _ in results]
    errors += [err for _, err in results if err is not None]

    previous_path = latest_snapshot_path(config.catalog_dir)
    previous = load_snapshot(previous_path) if previous_path else None
    if incremental and previous is not None:
        # files skipped by the since-last-scan filter keep their prior entry
        seen = {e.identity for e in entries}
        carried = [e for e in previous.entries if e.identity not in seen and _still_present(e.record)]
        entries += [_rebase(e, config.risk) for e in carried]
        log.info("carried forward %d unchanged record(s)", len(carried))

    _stage(3)
    entries, graph = link_and_propagate(entries, config.risk)
    log.info("link graph: %d node(s), %d edge(s)", len(graph.nodes), len(graph.edges))

    _stage(4)
    snapshot = InventorySnapshot(new_scan_id(started), started, datetime.now(timezone.utc),
                                 entries, sorted(errors, key=lambda e: (e.path, e.container_chain, e.code)))
    path = save_snapshot(snapshot, config.catalog_dir)

    _stage(5, "against " + (previous.scan_id if previous else "nothing (first scan)"))
    report = diff(previous, snapshot)

    _stage(6, str(config.output_dir))
    bundle = render_reports(snapshot, report, config.report_formats, config.output_dir, graph)

    code = EXIT_VIOLATIONS if report.newly_high_risk else EXIT_CLEAN
    log.info("done: %d record(s), %d error(s), %d violation(s)",
             len(entries), len(errors), len(report.newly_high_risk))
    return PipelineResult(snapshot, report, bundle, graph, path, code)

