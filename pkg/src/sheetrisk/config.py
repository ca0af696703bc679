"""Pipeline configuration: YAML (or JSON) file -> validated PipelineConfig."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from datetime import date
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Any, Optional

import yaml

from sheetrisk.discovery import ArchiveLimits, ScanFilter, ScanRoot
from sheetrisk.errors import ConfigError
from sheetrisk.risk import (
    DEFAULT_COMPLEXITY_SCALE,
    DEFAULT_MATERIALITY_SCALE,
    DEFAULT_MATRIX,
    BandScale,
    ComplexityRule,
    MaterialityRule,
    RiskConfig,
    RiskMatrix,
    validate_config,
)

SCHEMA_VERSION = 1
REPORT_FORMATS = ("csv", "structured")

_TOP_KEYS = {
    "schema_version", "roots", "filter", "archive", "materiality_rules", "complexity_rules",
    "scales", "matrix", "catalog_dir", "output_dir", "report_formats", "workers",
}


@dataclass(frozen=True)
class PipelineConfig:
    roots: tuple[ScanRoot, ...]
    filter: ScanFilter = ScanFilter()
    risk: RiskConfig = RiskConfig()
    catalog_dir: Path = Path("catalog")
    output_dir: Path = Path("reports")
    report_formats: tuple[str, ...] = REPORT_FORMATS
    archive: ArchiveLimits = ArchiveLimits()
    workers: int = 8
    source: Optional[Path] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "roots", tuple(self.roots))
        object.__setattr__(self, "catalog_dir", Path(self.catalog_dir).absolute())
        object.__setattr__(self, "output_dir", Path(self.output_dir).absolute())
        object.__setattr__(self, "report_formats", tuple(self.report_formats))


def _decimal(value: Any, where: str, problems: list[str]) -> Optional[Decimal]:
    if value is None:
        return None
    if isinstance(value, bool):
        problems.append(f"{where}: must be a number")
        return None
    try:
        return Decimal(str(value))
    except InvalidOperation:
        problems.append(f"{where}: must be a number")
        return None


def _int(value: Any, where: str, problems: list[str], minimum: int = 0) -> Optional[int]:
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        problems.append(f"{where}: must be an integer >= {minimum}")
        return None
    return value


def _points(value: Any, where: str, problems: list[str], rule_id: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < 0:
        problems.append(f"{where}.points: must be a non-negative integer (rule {rule_id!r})")
        return 0
    return value


def _resolve(base: Path, value: Any) -> Path:
    p = Path(os.path.expanduser(str(value)))
    return p if p.is_absolute() else (base / p)


def _parse_date(value: Any, where: str, problems: list[str]) -> Optional[date]:
    if isinstance(value, date):
        return value
    try:
        return date.fromisoformat(str(value))
    except ValueError:
        problems.append(f"{where}: expected YYYY-MM-DD, got {value!r}")
        return None


def _parse_roots(raw: Any, base: Path, problems: list[str]) -> list[ScanRoot]:
    if not isinstance(raw, list) or not raw:
        problems.append("roots: at least one root is required")
        return []
    roots = []
    for i, item in enumerate(raw):
        where = f"roots[{i}]"
        if isinstance(item, str):
            item = {"path": item}
        if not isinstance(item, dict) or "path" not in item:
            problems.append(f"{where}.path: required")
            continue
        try:
            roots.append(
                ScanRoot(str(_resolve(base, item["path"])), str(item.get("label", "")),
                         item.get("kind", "file-share"))
            )
        except ValueError as exc:
            problems.append(f"{where}.kind: {exc}")
    return roots


def _parse_filter(raw: Any, problems: list[str]) -> ScanFilter:
    if raw is None:
        return ScanFilter()
    if not isinstance(raw, dict):
        problems.append("filter: must be a mapping")
        return ScanFilter()
    kwargs: dict[str, Any] = {}
    patterns = raw.get("name_patterns", [])
    if not isinstance(patterns, list) or not all(isinstance(p, str) for p in patterns):
        problems.append("filter.name_patterns: must be a list of strings")
    else:
        kwargs["name_patterns"] = tuple(patterns)
    windows = []
    for i, w in enumerate(raw.get("modified_windows", []) or []):
        where = f"filter.modified_windows[{i}]"
        if isinstance(w, dict):
            w = [w.get("start"), w.get("end")]
        if not isinstance(w, (list, tuple)) or len(w) != 2:
            problems.append(f"{where}: expected [start, end]")
            continue
        start, end = _parse_date(w[0], where + ".start", problems), _parse_date(w[1], where + ".end", problems)
        if start and end:
            if start > end:
                problems.append(f"{where}: start is after end")
            else:
                windows.append((start, end))
    kwargs["modified_windows"] = tuple(windows)
    for key in ("since_last_scan", "follow_symlinks"):
        if key in raw:
            if not isinstance(raw[key], bool):
                problems.append(f"filter.{key}: must be true or false")
            else:
                kwargs[key] = raw[key]
    if "max_file_size_bytes" in raw:
        value = _int(raw["max_file_size_bytes"], "filter.max_file_size_bytes", problems, minimum=1)
        if value:
            kwargs["max_file_size_bytes"] = value
    unknown = set(raw) - {"name_patterns", "modified_windows", "since_last_scan",
                          "follow_symlinks", "max_file_size_bytes"}
    problems.extend(f"filter.{k}: unknown key" for k in sorted(unknown))
    return ScanFilter(**kwargs)


def _parse_materiality(raw: Any, problems: list[str]) -> list[MaterialityRule]:
    if not isinstance(raw, list):
        problems.append("materiality_rules: must be a list")
        return []
    rules = []
    for i, item in enumerate(raw):
        where = f"materiality_rules[{i}]"
        if not isinstance(item, dict):
            problems.append(f"{where}: must be a mapping")
            continue
        rule_id = str(item.get("id", ""))
        pattern = item.get("pattern")
        rules.append(MaterialityRule(
            id=rule_id,
            kind=str(item.get("kind", "")),
            pattern=None if pattern is None else str(pattern),
            threshold=_decimal(item.get("threshold"), where + ".threshold", problems),
            points=_points(item.get("points", 0), where, problems, rule_id),
        ))
    return rules


def _parse_complexity(raw: Any, problems: list[str]) -> list[ComplexityRule]:
    if not isinstance(raw, list):
        problems.append("complexity_rules: must be a list")
        return []
    rules = []
    for i, item in enumerate(raw):
        where = f"complexity_rules[{i}]"
        if not isinstance(item, dict):
            problems.append(f"{where}: must be a mapping")
            continue
        rule_id = str(item.get("id", ""))
        rules.append(ComplexityRule(
            id=rule_id,
            metric=str(item.get("metric", "")),
            comparator=str(item.get("comparator", "")),
            threshold=_decimal(item.get("threshold"), where + ".threshold", problems),
            points=_points(item.get("points", 0), where, problems, rule_id),
        ))
    return rules


def _parse_scale(raw: Any, default: BandScale, where: str, problems: list[str]) -> BandScale:
    if raw is None:
        return default
    if not isinstance(raw, dict):
        problems.append(f"{where}: must be a mapping")
        return default
    cuts = raw.get("cuts", list(default.cuts))
    labels = raw.get("labels", list(default.labels))
    if not isinstance(cuts, list) or len(cuts) != 2:
        problems.append(f"{where}.cuts: need two integers")
        return default
    if not isinstance(labels, list) or len(labels) != 3:
        problems.append(f"{where}.labels: need three band names")
        return default
    return BandScale(tuple(cuts), tuple(str(x) for x in labels))


def _parse_matrix(raw: Any, problems: list[str]) -> Optional[RiskMatrix]:
    if not isinstance(raw, dict):
        problems.append("matrix: must be a mapping of materiality band -> complexity band -> risk")
        return None
    cells = {}
    for m, row in raw.items():
        if not isinstance(row, dict):
            problems.append(f"matrix.{m}: must be a mapping")
            continue
        for c, risk in row.items():
            cells[(str(m), str(c))] = str(risk).upper()
    return RiskMatrix(cells)


def _remap_default_matrix(mat: BandScale, cx: BandScale) -> RiskMatrix:
    old_m, old_c = DEFAULT_MATERIALITY_SCALE.labels, DEFAULT_COMPLEXITY_SCALE.labels
    return RiskMatrix({
        (mat.labels[i], cx.labels[j]): DEFAULT_MATRIX.lookup(old_m[i], old_c[j])
        for i in range(3) for j in range(3)
    })


def _writable(path: Path) -> bool:
    probe = path
    while not probe.exists():
        if probe.parent == probe:
            return False
        probe = probe.parent
    return probe.is_dir() and os.access(probe, os.W_OK)


def _inside(child: Path, parent: Path) -> bool:
    try:
        Path(os.path.realpath(child)).relative_to(os.path.realpath(parent))
        return True
    except ValueError:
        return False


def check_output_paths(config: PipelineConfig) -> list[str]:
    problems = []
    for key in ("catalog_dir", "output_dir"):
        path = getattr(config, key)
        if not _writable(path):
            problems.append(f"{key}: {path} is not writable")
        for root in config.roots:
            if _inside(path, Path(root.path)):
                problems.append(f"{key}: {path} lies inside scan root {root.path}; scanned trees are read-only")
    return problems


def config_from_dict(data: Any, base_dir: Path = Path("."), source: Optional[Path] = None) -> PipelineConfig:
    """Validate a parsed configuration mapping, applying defaults."""
    if not isinstance(data, dict):
        raise ConfigError("config-invalid", "top level: must be a mapping")
    base_dir = Path(base_dir).absolute()
    problems: list[str] = []
    problems.extend(f"{k}: unknown key" for k in sorted(set(data) - _TOP_KEYS))
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        problems.append(f"schema_version: unsupported version {version!r} (expected {SCHEMA_VERSION})")

    roots = _parse_roots(data.get("roots"), base_dir, problems)
    scan_filter = _parse_filter(data.get("filter"), problems)

    archive = ArchiveLimits()
    if "archive" in data:
        raw = data["archive"] if isinstance(data["archive"], dict) else {}
        depth = _int(raw.get("max_depth", archive.max_depth), "archive.max_depth", problems, minimum=1)
        budget = _int(raw.get("max_decompressed_bytes", archive.max_decompressed_bytes),
                      "archive.max_decompressed_bytes", problems, minimum=1)
        if depth and budget:
            archive = ArchiveLimits(depth, budget)

    m_rules = (_parse_materiality(data["materiality_rules"], problems)
               if "materiality_rules" in data else list(RiskConfig().materiality_rules))
    c_rules = (_parse_complexity(data["complexity_rules"], problems)
               if "complexity_rules" in data else list(RiskConfig().complexity_rules))
    scales = data.get("scales") or {}
    if not isinstance(scales, dict):
        problems.append("scales: must be a mapping")
        scales = {}
    m_scale = _parse_scale(scales.get("materiality"), DEFAULT_MATERIALITY_SCALE, "scales.materiality", problems)
    c_scale = _parse_scale(scales.get("complexity"), DEFAULT_COMPLEXITY_SCALE, "scales.complexity", problems)
    if "matrix" in data:
        matrix = _parse_matrix(data["matrix"], problems) or DEFAULT_MATRIX
    else:
        matrix = _remap_default_matrix(m_scale, c_scale)

    formats = data.get("report_formats", list(REPORT_FORMATS))
    if not isinstance(formats, list) or not formats or any(f not in REPORT_FORMATS for f in formats):
        problems.append(f"report_formats: must be a non-empty subset of {list(REPORT_FORMATS)}")
        formats = list(REPORT_FORMATS)
    workers = _int(data.get("workers", 8), "workers", problems, minimum=1) or 8

    if problems:
        raise ConfigError("config-invalid", problems)
    risk = RiskConfig(tuple(m_rules), tuple(c_rules), m_scale, c_scale, matrix)
    validate_config(risk)
    config = PipelineConfig(
        roots=tuple(roots),
        filter=scan_filter,
        risk=risk,
        catalog_dir=_resolve(base_dir, data.get("catalog_dir", "catalog")),
        output_dir=_resolve(base_dir, data.get("output_dir", "reports")),
        report_formats=tuple(dict.fromkeys(formats)),
        archive=archive,
        workers=workers,
        source=source,
    )
    problems = check_output_paths(config)
    if problems:
        raise ConfigError("config-invalid", problems)
    return config


def load_config(path) -> PipelineConfig:
    """Read and validate a configuration file.

    Relative paths inside the file resolve against the file's directory.
    """
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError("config-invalid", f"{path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError("config-invalid", f"{path}: not valid YAML/JSON: {exc}") from exc
    return config_from_dict(data, path.parent, source=path)
