"""Plain-file scan catalog: one JSON-lines snapshot per scan.

Layout::

    <catalog>/scan-<scan_id>.jsonl   header line, then one record per line
    <catalog>/lock                   advisory single-writer lock

Snapshots are never rewritten once saved.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from filelock import FileLock, Timeout

from sheetrisk.discovery import FileRecord, format_ts, parse_ts
from sheetrisk.errors import CatalogError, ScanError
from sheetrisk.risk import MetricsProfile, RiskAssessment

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
LOCK_TIMEOUT_S = 60


@dataclass(frozen=True)
class InventoryEntry:
    record: FileRecord
    profile: MetricsProfile
    assessment: RiskAssessment
    external_targets: tuple[str, ...] = ()
    status: str = "ok"  # ok | encrypted | unsupported-format | corrupt-workbook

    @property
    def identity(self) -> str:
        return self.record.identity

    def to_dict(self) -> dict:
        return {
            "type": "record",
            "record": self.record.to_dict(),
            "profile": self.profile.to_dict(),
            "assessment": self.assessment.to_dict(),
            "external_targets": list(self.external_targets),
            "status": self.status,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InventoryEntry":
        return cls(
            record=FileRecord.from_dict(d["record"]),
            profile=MetricsProfile.from_dict(d["profile"]),
            assessment=RiskAssessment.from_dict(d["assessment"]),
            external_targets=tuple(d.get("external_targets", ())),
            status=d.get("status", "ok"),
        )


@dataclass
class InventorySnapshot:
    scan_id: str
    started_at: datetime
    finished_at: datetime
    entries: list[InventoryEntry] = field(default_factory=list)
    errors: list[ScanError] = field(default_factory=list)

    def __post_init__(self):
        self.entries.sort(key=lambda e: e.record.sort_key)

    @property
    def by_identity(self) -> dict[str, InventoryEntry]:
        return {e.identity: e for e in self.entries}

    def header(self) -> dict:
        return {
            "type": "header",
            "schema_version": SCHEMA_VERSION,
            "scan_id": self.scan_id,
            "started_at": format_ts(self.started_at),
            "finished_at": format_ts(self.finished_at),
            "record_count": len(self.entries),
            "errors": [e.to_dict() for e in self.errors],
        }


def new_scan_id(started_at: Optional[datetime] = None) -> str:
    started_at = started_at or datetime.now(timezone.utc)
    return f"{started_at.astimezone(timezone.utc):%Y%m%dT%H%M%S%fZ}-{uuid.uuid4().hex[:8]}"


def snapshot_path(catalog_dir, scan_id: str) -> Path:
    return Path(catalog_dir) / f"scan-{scan_id}.jsonl"


def _dumps(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


def save_snapshot(snapshot: InventorySnapshot, catalog_dir) -> Path:
    """Write atomically (temp file + rename) under the catalog lock."""
    catalog = Path(catalog_dir)
    try:
        catalog.mkdir(parents=True, exist_ok=True)
        with FileLock(str(catalog / "lock"), timeout=LOCK_TIMEOUT_S):
            target = snapshot_path(catalog, snapshot.scan_id)
            if target.exists():
                raise CatalogError("catalog-write-failed", f"snapshot {target.name} already exists")
            fd, tmp = tempfile.mkstemp(prefix=".scan-", suffix=".tmp", dir=catalog)
            try:
                with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                    fh.write(_dumps(snapshot.header()) + "\n")
                    for entry in snapshot.entries:
                        fh.write(_dumps(entry.to_dict()) + "\n")
                    fh.flush()
                    os.fsync(fh.fileno())
                os.replace(tmp, target)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise
    except (OSError, Timeout) as exc:
        raise CatalogError("catalog-write-failed", f"{catalog}: {exc}") from exc
    return target


def _read_header(line: str, path, lineno: int = 1) -> dict:
    try:
        header = json.loads(line)
        if header.get("type") != "header":
            raise ValueError("first line is not a header")
        header["started_at"] = parse_ts(header["started_at"])
        header["finished_at"] = parse_ts(header["finished_at"])
        return header
    except (ValueError, KeyError, TypeError, AttributeError) as exc:
        raise CatalogError("catalog-corrupt", f"{path}: line {lineno}: {exc}") from exc


def load_snapshot(path) -> InventorySnapshot:
    """Inverse of :func:`save_snapshot`; malformed lines raise ``catalog-corrupt``."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise CatalogError("catalog-corrupt", f"{path}: line 1: empty file")
    header = _read_header(lines[0], path)
    entries = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            data = json.loads(line)
            if data.get("type") != "record":
                raise ValueError("not a record line")
            entries.append(InventoryEntry.from_dict(data))
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            raise CatalogError("catalog-corrupt", f"{path}: line {lineno}: {exc}") from exc
    expected = header.get("record_count")
    if expected is not None and expected != len(entries):
        raise CatalogError(
            "catalog-corrupt",
            f"{path}: line {len(entries) + 2}: expected {expected} records, found {len(entries)}",
        )
    try:
        errors = [ScanError.from_dict(e) for e in header.get("errors", [])]
    except (KeyError, TypeError) as exc:
        raise CatalogError("catalog-corrupt", f"{path}: line 1: {exc}") from exc
    return InventorySnapshot(
        scan_id=header["scan_id"],
        started_at=header["started_at"],
        finished_at=header["finished_at"],
        entries=entries,
        errors=errors,
    )


def _headers(catalog_dir) -> list[tuple[datetime, str, Path]]:
    catalog = Path(catalog_dir)
    if not catalog.is_dir():
        return []
    found = []
    for path in catalog.glob("scan-*.jsonl"):
        try:
            with open(path, encoding="utf-8") as fh:
                header = _read_header(fh.readline(), path)
        except (CatalogError, OSError) as exc:
            log.warning("skipping unreadable snapshot %s: %s", path, exc)
            continue
        found.append((header["finished_at"], header["scan_id"], path))
    return sorted(found)


def latest_snapshot_path(catalog_dir) -> Optional[Path]:
    headers = _headers(catalog_dir)
    return headers[-1][2] if headers else None


def previous_snapshot_path(catalog_dir, scan_id: str) -> Optional[Path]:
    """The snapshot saved immediately before ``scan_id`` in the same catalog."""
    headers = _headers(catalog_dir)
    ids = [h[1] for h in headers]
    if scan_id not in ids:
        return None
    i = ids.index(scan_id)
    return headers[i - 1][2] if i > 0 else None


def last_scan_time(catalog_dir) -> Optional[datetime]:
    headers = _headers(catalog_dir)
    return max(h[0] for h in headers) if headers else None


@dataclass
class DiffReport:
    new: list[str] = field(default_factory=list)
    modified: list[str] = field(default_factory=list)
    deleted: list[str] = field(default_factory=list)
    unchanged: list[str] = field(default_factory=list)
    newly_high_risk: list[str] = field(default_factory=list)

    @property
    def has_changes(self) -> bool:
        return bool(self.new or self.modified or self.deleted)

    def to_dict(self) -> dict:
        return {
            "new": self.new,
            "modified": self.modified,
            "deleted": self.deleted,
            "unchanged": self.unchanged,
            "newly_high_risk": self.newly_high_risk,
        }


def diff(previous: Optional[InventorySnapshot], current: InventorySnapshot) -> DiffReport:
    """Partition identities by presence and content hash.

    ``previous=None`` treats every current record as new.
    """
    before = previous.by_identity if previous is not None else {}
    after = current.by_identity
    report = DiffReport()
    for ident in sorted(set(before) | set(after)):
        old, cur = before.get(ident), after.get(ident)
        if old is None:
            report.new.append(ident)
        elif cur is None:
            report.deleted.append(ident)
        elif old.record.content_hash == cur.record.content_hash:
            report.unchanged.append(ident)
        else:
            report.modified.append(ident)
        if cur is not None and cur.assessment.risk == "HIGH" and (
            old is None or old.assessment.risk != "HIGH"
        ):
            report.newly_high_risk.append(ident)
    return report
