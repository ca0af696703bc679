"""Materiality and complexity scoring, banding and the risk matrix.

Every rule fires at most once per workbook. Scores are plain sums of the
points of the rules that fired, which keeps every assessment explainable
from its ``matched_*_rule_ids``.
"""

from __future__ import annotations

import fnmatch
import re
from dataclasses import dataclass, fields, replace
from decimal import Decimal, InvalidOperation
from typing import Iterable, Optional, Sequence

from sheetrisk.discovery import FileRecord
from sheetrisk.errors import ConfigError
from sheetrisk.formula import FormulaAnalysis
from sheetrisk.workbook import WorkbookFacts, count_invisible_cells, hidden_census

MATERIALITY_KINDS = {
    "cell-text-contains": "pattern",
    "currency-exceeds": "threshold",
    "numeric-exceeds": "threshold",
    "doc-property-matches": "pattern",
    "file-name-matches": "pattern",
    "sheet-name-matches": "pattern",
    "path-matches": "pattern",
    "has-external-links": None,
}

BOOLEAN_METRICS = frozenset({"has-macros", "is-password-protected"})
NUMERIC_METRICS = frozenset({
    "worksheet-count", "formula-count", "formula-error-count", "array-formula-count",
    "max-if-nesting", "external-link-count", "named-item-count", "invisible-cell-count",
    "hidden-element-count", "very-hidden-sheet-count", "workbook-size-bytes",
    "unparsed-formula-count",
})
COMPARATORS = ("greater-than", "at-least", "is-true")
RISK_LEVELS = ("LOW", "MEDIUM", "HIGH")

# still scoreable when the workbook content could not be read
UNAVAILABLE_SAFE_METRICS = frozenset({"is-password-protected", "workbook-size-bytes"})


@dataclass(frozen=True)
class MaterialityRule:
    id: str
    kind: str
    pattern: Optional[str] = None
    threshold: Optional[Decimal] = None
    points: int = 0


@dataclass(frozen=True)
class ComplexityRule:
    id: str
    metric: str
    comparator: str
    threshold: Optional[Decimal] = None
    points: int = 0


@dataclass(frozen=True)
class BandScale:
    cuts: tuple[int, int]
    labels: tuple[str, str, str]

    def index(self, label: str) -> int:
        return self.labels.index(label)

    @property
    def top(self) -> str:
        return self.labels[2]


@dataclass(frozen=True)
class RiskMatrix:
    cells: dict  # (materiality band, complexity band) -> risk level

    def __hash__(self):
        return hash(tuple(sorted(self.cells.items())))

    def lookup(self, materiality: str, complexity: str) -> str:
        return self.cells[(materiality, complexity)]


@dataclass(frozen=True)
class MetricsProfile:
    worksheet_count: int = 0
    formula_count: int = 0
    formula_error_count: int = 0
    array_formula_count: int = 0
    max_if_nesting: int = 0
    external_link_count: int = 0
    has_macros: bool = False
    named_item_count: int = 0
    invisible_cell_count: int = 0
    hidden_element_count: int = 0
    very_hidden_sheet_count: int = 0
    workbook_size_bytes: int = 0
    is_password_protected: bool = False
    unparsed_formula_count: int = 0
    metrics_available: bool = True
    # breakdowns kept for reporting, not rule targets
    hidden_sheet_count: int = 0
    hidden_row_count: int = 0
    hidden_column_count: int = 0
    if_call_count: int = 0

    def value(self, metric: str):
        return getattr(self, metric.replace("-", "_"))

    @classmethod
    def unavailable(cls, size_bytes: int, password_protected: bool = False) -> "MetricsProfile":
        return cls(
            workbook_size_bytes=size_bytes,
            is_password_protected=password_protected,
            metrics_available=False,
        )

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsProfile":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass(frozen=True)
class RiskAssessment:
    materiality_score: int
    complexity_score: int
    matched_materiality_rule_ids: tuple[str, ...]
    matched_complexity_rule_ids: tuple[str, ...]
    materiality_band: str
    complexity_band: str
    risk: str
    inherited_critical: bool = False
    effective_materiality_band: str = ""

    def __post_init__(self):
        if not self.effective_materiality_band:
            object.__setattr__(self, "effective_materiality_band", self.materiality_band)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["matched_materiality_rule_ids"] = list(self.matched_materiality_rule_ids)
        d["matched_complexity_rule_ids"] = list(self.matched_complexity_rule_ids)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RiskAssessment":
        return cls(
            materiality_score=int(d["materiality_score"]),
            complexity_score=int(d["complexity_score"]),
            matched_materiality_rule_ids=tuple(d["matched_materiality_rule_ids"]),
            matched_complexity_rule_ids=tuple(d["matched_complexity_rule_ids"]),
            materiality_band=d["materiality_band"],
            complexity_band=d["complexity_band"],
            risk=d["risk"],
            inherited_critical=bool(d.get("inherited_critical", False)),
            effective_materiality_band=d.get("effective_materiality_band", ""),
        )


# -- defaults ----------------------------------------------------------------

DEFAULT_MATERIALITY_RULES = (
    MaterialityRule("cell-text-income", "cell-text-contains", pattern="Income", points=10),
    MaterialityRule("currency-over-5m", "currency-exceeds", threshold=Decimal("5000000"), points=80),
    MaterialityRule("operational-over-10m", "numeric-exceeds", threshold=Decimal("10000000"), points=20),
    MaterialityRule("name-revenue", "file-name-matches", pattern="*revenue*", points=40),
    MaterialityRule("name-earnings", "file-name-matches", pattern="*earnings*", points=40),
    MaterialityRule("sheet-pnl", "sheet-name-matches", pattern="*p&l*", points=20),
    MaterialityRule("property-sox", "doc-property-matches", pattern="*sox*", points=30),
    MaterialityRule("path-finance", "path-matches", pattern="*/finance/*", points=10),
    MaterialityRule("external-links", "has-external-links", points=10),
)

DEFAULT_COMPLEXITY_RULES = (
    ComplexityRule("formula-errors", "formula-error-count", "greater-than", Decimal(1), 75),
    ComplexityRule("invisible-cells", "invisible-cell-count", "at-least", Decimal(1), 10),
    ComplexityRule("password-protected", "is-password-protected", "is-true", None, 10),
    ComplexityRule("many-worksheets", "worksheet-count", "greater-than", Decimal(10), 10),
    ComplexityRule("many-formulas", "formula-count", "greater-than", Decimal(500), 20),
    ComplexityRule("array-formulas", "array-formula-count", "at-least", Decimal(1), 10),
    ComplexityRule("deep-nested-ifs", "max-if-nesting", "greater-than", Decimal(3), 15),
    ComplexityRule("external-links", "external-link-count", "at-least", Decimal(1), 15),
    ComplexityRule("macros", "has-macros", "is-true", None, 25),
    ComplexityRule("many-named-items", "named-item-count", "greater-than", Decimal(20), 5),
    ComplexityRule("hidden-elements", "hidden-element-count", "at-least", Decimal(1), 5),
    ComplexityRule("very-hidden-sheets", "very-hidden-sheet-count", "at-least", Decimal(1), 20),
    ComplexityRule("large-workbook", "workbook-size-bytes", "greater-than", Decimal(10 * 1024 * 1024), 10),
    ComplexityRule("unparsed-formulas", "unparsed-formula-count", "at-least", Decimal(1), 5),
)

DEFAULT_MATERIALITY_SCALE = BandScale((40, 80), ("LOW", "MODERATE", "CRITICAL"))
DEFAULT_COMPLEXITY_SCALE = BandScale((40, 80), ("BASIC", "INTERMEDIATE", "ADVANCED"))


def _grid(mat_labels, cx_labels, rows) -> RiskMatrix:
    return RiskMatrix({(m, c): rows[i][j] for i, m in enumerate(mat_labels) for j, c in enumerate(cx_labels)})


DEFAULT_MATRIX = _grid(
    DEFAULT_MATERIALITY_SCALE.labels,
    DEFAULT_COMPLEXITY_SCALE.labels,
    (
        ("LOW", "LOW", "MEDIUM"),
        ("MEDIUM", "MEDIUM", "HIGH"),
        ("MEDIUM", "HIGH", "HIGH"),
    ),
)


@dataclass(frozen=True)
class RiskConfig:
    materiality_rules: tuple[MaterialityRule, ...] = DEFAULT_MATERIALITY_RULES
    complexity_rules: tuple[ComplexityRule, ...] = DEFAULT_COMPLEXITY_RULES
    materiality_scale: BandScale = DEFAULT_MATERIALITY_SCALE
    complexity_scale: BandScale = DEFAULT_COMPLEXITY_SCALE
    matrix: RiskMatrix = DEFAULT_MATRIX

    def __post_init__(self):
        object.__setattr__(self, "materiality_rules", tuple(self.materiality_rules))
        object.__setattr__(self, "complexity_rules", tuple(self.complexity_rules))


# -- validation --------------------------------------------------------------


def _check_points(rule, where: str, problems: list[str]) -> None:
    if not isinstance(rule.points, int) or isinstance(rule.points, bool) or rule.points < 0:
        problems.append(f"{where}.points: must be a non-negative integer (rule {rule.id!r})")


def validate_materiality_rules(rules: Sequence[MaterialityRule], prefix="materiality_rules") -> list[str]:
    problems: list[str] = []
    seen = set()
    for i, rule in enumerate(rules):
        where = f"{prefix}[{i}]"
        if not rule.id:
            problems.append(f"{where}.id: required")
        elif rule.id in seen:
            problems.append(f"{where}.id: duplicate id {rule.id!r}")
        seen.add(rule.id)
        _check_points(rule, where, problems)
        if rule.kind not in MATERIALITY_KINDS:
            problems.append(f"{where}.kind: unknown kind {rule.kind!r}")
            continue
        needs = MATERIALITY_KINDS[rule.kind]
        if needs == "pattern":
            if not rule.pattern:
                problems.append(f"{where}.pattern: required for {rule.kind}")
            if rule.threshold is not None:
                problems.append(f"{where}.threshold: not allowed for {rule.kind}")
        elif needs == "threshold":
            if rule.threshold is None:
                problems.append(f"{where}.threshold: required for {rule.kind}")
            if rule.pattern is not None:
                problems.append(f"{where}.pattern: not allowed for {rule.kind}")
        else:
            if rule.pattern is not None or rule.threshold is not None:
                problems.append(f"{where}: {rule.kind} takes neither pattern nor threshold")
    return problems


def validate_complexity_rules(rules: Sequence[ComplexityRule], prefix="complexity_rules") -> list[str]:
    problems: list[str] = []
    seen = set()
    for i, rule in enumerate(rules):
        where = f"{prefix}[{i}]"
        if not rule.id:
            problems.append(f"{where}.id: required")
        elif rule.id in seen:
            problems.append(f"{where}.id: duplicate id {rule.id!r}")
        seen.add(rule.id)
        _check_points(rule, where, problems)
        if rule.metric not in BOOLEAN_METRICS | NUMERIC_METRICS:
            problems.append(f"{where}.metric: unknown metric {rule.metric!r}")
            continue
        if rule.comparator not in COMPARATORS:
            problems.append(f"{where}.comparator: unknown comparator {rule.comparator!r}")
            continue
        if rule.comparator == "is-true":
            if rule.metric not in BOOLEAN_METRICS:
                problems.append(f"{where}.comparator: is-true needs a boolean metric, {rule.metric} is numeric")
            if rule.threshold is not None:
                problems.append(f"{where}.threshold: not allowed with is-true")
        else:
            if rule.metric in BOOLEAN_METRICS:
                problems.append(f"{where}.comparator: {rule.comparator} needs a numeric metric, {rule.metric} is boolean")
            if rule.threshold is None:
                problems.append(f"{where}.threshold: required for {rule.comparator}")
    return problems


def validate_scale(scale: BandScale, where: str) -> list[str]:
    problems = []
    if len(scale.cuts) != 2 or any(not isinstance(c, int) or isinstance(c, bool) or c < 0 for c in scale.cuts):
        problems.append(f"{where}.cuts: need two non-negative integers")
    elif scale.cuts[0] > scale.cuts[1]:
        problems.append(f"{where}.cuts: must be ascending")
    if len(scale.labels) != 3 or len(set(scale.labels)) != 3:
        problems.append(f"{where}.labels: need three distinct band names")
    return problems


def validate_matrix(matrix: RiskMatrix, mat: BandScale, cx: BandScale) -> tuple[list[str], list[str]]:
    """Returns (totality/value problems, monotonicity problems)."""
    problems, monotone = [], []
    for m in mat.labels:
        for c in cx.labels:
            if (m, c) not in matrix.cells:
                problems.append(f"matrix.{m}.{c}: missing cell")
            elif matrix.cells[(m, c)] not in RISK_LEVELS:
                problems.append(f"matrix.{m}.{c}: risk must be one of {', '.join(RISK_LEVELS)}")
    for key in matrix.cells:
        if key[0] not in mat.labels or key[1] not in cx.labels:
            problems.append(f"matrix.{key[0]}.{key[1]}: unknown band")
    if problems:
        return problems, monotone
    level = {r: i for i, r in enumerate(RISK_LEVELS)}
    for i, m in enumerate(mat.labels):
        for j, c in enumerate(cx.labels):
            here = level[matrix.cells[(m, c)]]
            if i + 1 < 3 and level[matrix.cells[(mat.labels[i + 1], c)]] < here:
                monotone.append(f"matrix.{mat.labels[i + 1]}.{c}: lower than matrix.{m}.{c}")
            if j + 1 < 3 and level[matrix.cells[(m, cx.labels[j + 1])]] < here:
                monotone.append(f"matrix.{m}.{cx.labels[j + 1]}: lower than matrix.{m}.{c}")
    return problems, monotone


def validate_config(config: RiskConfig) -> None:
    """Raise :class:`ConfigError` listing every problem found."""
    problems = validate_materiality_rules(config.materiality_rules)
    problems += validate_complexity_rules(config.complexity_rules)
    problems += validate_scale(config.materiality_scale, "scales.materiality")
    problems += validate_scale(config.complexity_scale, "scales.complexity")
    if problems:
        raise ConfigError("config-invalid", problems)
    problems, monotone = validate_matrix(config.matrix, config.materiality_scale, config.complexity_scale)
    if problems:
        raise ConfigError("config-invalid", problems)
    if monotone:
        raise ConfigError("matrix-not-monotone", monotone)


# -- metrics -----------------------------------------------------------------


def external_link_keys(facts: WorkbookFacts, analyses: Iterable[FormulaAnalysis]) -> set[str]:
    """Distinct external targets: linked parts plus any unmatched ``[n]`` refs."""
    keys = set(facts.external_targets)
    n_parts = len(facts.external_targets)
    for a in analyses:
        for ref in a.refs:
            if ref.scope != "external":
                continue
            idx = ref.workbook_index
            keys.add(facts.external_targets[idx - 1] if 1 <= idx <= n_parts else f"[{idx}]")
    return keys


def compute_metrics(facts: Optional[WorkbookFacts], analyses: Sequence[FormulaAnalysis] = (),
                    *, size_bytes: int = 0) -> MetricsProfile:
    """Complexity measurements for one workbook.

    ``analyses`` are aligned with ``facts.formulas``. ``facts=None`` (content
    unreadable, e.g. legacy binary) gives an unavailable profile carrying
    ``size_bytes``.
    """
    if facts is None:
        return MetricsProfile.unavailable(size_bytes)
    if facts.encrypted:
        return MetricsProfile.unavailable(facts.size_bytes or size_bytes, password_protected=True)
    hidden_sheets, very_hidden, hidden_rows, hidden_cols = hidden_census(facts)
    parsed = [a for a in analyses if not a.unparsed]
    return MetricsProfile(
        worksheet_count=len(facts.sheets),
        formula_count=len(facts.formulas),
        formula_error_count=sum(1 for c in facts.cells if c.value_kind == "error"),
        array_formula_count=sum(1 for f in facts.formulas if f.is_array),
        max_if_nesting=max((a.depth for a in parsed), default=0),
        external_link_count=len(external_link_keys(facts, analyses)),
        has_macros=facts.has_macros,
        named_item_count=len(facts.defined_names),
        invisible_cell_count=count_invisible_cells(facts),
        hidden_element_count=hidden_rows + hidden_cols + hidden_sheets,
        very_hidden_sheet_count=very_hidden,
        workbook_size_bytes=facts.size_bytes or size_bytes,
        is_password_protected=facts.password_protected,
        unparsed_formula_count=sum(1 for a in analyses if a.unparsed),
        hidden_sheet_count=hidden_sheets,
        hidden_row_count=hidden_rows,
        hidden_column_count=hidden_cols,
        if_call_count=sum(a.census.get("IF", 0) for a in parsed),
    )


# -- scoring -----------------------------------------------------------------

_CURRENCY_SYMBOLS = "$€£¥₹₩₽¢₣₤₪₫₱₦₴₭₮₲₵₸₺₼₾₿"
_LOCALE_ONLY = re.compile(r"\[\$-[0-9A-Fa-f]+\]")


def is_currency_format(code: str) -> bool:
    """Currency symbol (outside bare ``[$-409]`` locale tags) or accounting layout."""
    stripped = _LOCALE_ONLY.sub("", code or "")
    if any(sym in stripped for sym in _CURRENCY_SYMBOLS):
        return True
    return "_(*" in stripped or "_-*" in stripped


def text_matches(pattern: str, text: str) -> bool:
    """Case-insensitive glob when the pattern has wildcards, else substring."""
    pattern, text = pattern.lower(), text.lower()
    if any(c in pattern for c in "*?["):
        return fnmatch.fnmatchcase(text, pattern)
    return pattern in text


def _number(text: str) -> Optional[Decimal]:
    try:
        value = Decimal(text.strip())
    except (InvalidOperation, AttributeError):
        return None
    return value if value.is_finite() else None


def _property_matches(pattern: str, props: dict[str, str]) -> bool:
    if "=" in pattern:
        key, _, value_pattern = pattern.partition("=")
        key = key.strip().lower()
        return any(k.lower() == key and text_matches(value_pattern, v) for k, v in props.items())
    return any(text_matches(pattern, v) for v in props.values())


def _materiality_fires(rule: MaterialityRule, facts: Optional[WorkbookFacts], record: FileRecord) -> bool:
    kind = rule.kind
    if kind == "file-name-matches":
        names = {record.name}
        names.add(record.path.replace("\\", "/").rsplit("/", 1)[-1])
        return any(text_matches(rule.pattern, n) for n in names)
    if kind == "path-matches":
        return text_matches(rule.pattern, record.identity.replace("\\", "/").replace("!", "/"))
    if facts is None or facts.encrypted:
        return False
    if kind == "cell-text-contains":
        return any(c.value_kind == "text" and text_matches(rule.pattern, c.cached_value) for c in facts.cells)
    if kind in ("currency-exceeds", "numeric-exceeds"):
        for c in facts.cells:
            if c.value_kind != "number":
                continue
            if kind == "currency-exceeds" and not is_currency_format(c.number_format):
                continue
            value = _number(c.cached_value)
            if value is not None and value > rule.threshold:
                return True
        return False
    if kind == "doc-property-matches":
        return _property_matches(rule.pattern, facts.doc_properties)
    if kind == "sheet-name-matches":
        return any(text_matches(rule.pattern, s.name) for s in facts.sheets)
    if kind == "has-external-links":
        return bool(facts.external_targets) or any(
            re.search(r"\[[1-9][0-9]*\]", f.text) for f in facts.formulas
        )
    raise ValueError(f"unknown materiality rule kind {kind!r}")


def score_materiality(facts: Optional[WorkbookFacts], record: FileRecord,
                      rules: Sequence[MaterialityRule]) -> tuple[int, tuple[str, ...]]:
    matched = tuple(r.id for r in rules if _materiality_fires(r, facts, record))
    points = {r.id: r.points for r in rules}
    return sum(points[i] for i in matched), matched


def _complexity_fires(rule: ComplexityRule, profile: MetricsProfile) -> bool:
    if not profile.metrics_available and rule.metric not in UNAVAILABLE_SAFE_METRICS:
        return False
    value = profile.value(rule.metric)
    if rule.comparator == "is-true":
        return bool(value)
    if rule.comparator == "greater-than":
        return Decimal(int(value)) > rule.threshold
    if rule.comparator == "at-least":
        return Decimal(int(value)) >= rule.threshold
    raise ValueError(f"unknown comparator {rule.comparator!r}")


def score_complexity(profile: MetricsProfile, rules: Sequence[ComplexityRule]) -> tuple[int, tuple[str, ...]]:
    matched = tuple(r.id for r in rules if _complexity_fires(r, profile))
    points = {r.id: r.points for r in rules}
    return sum(points[i] for i in matched), matched


def band(score: int, scale: BandScale) -> str:
    lower, upper = scale.cuts
    if score < lower:
        return scale.labels[0]
    if score < upper:
        return scale.labels[1]
    return scale.labels[2]


def assess(materiality_band: str, complexity_band: str, matrix: RiskMatrix = DEFAULT_MATRIX) -> str:
    return matrix.lookup(materiality_band, complexity_band)


def assess_workbook(record: FileRecord, facts: Optional[WorkbookFacts], profile: MetricsProfile,
                    config: RiskConfig = RiskConfig()) -> RiskAssessment:
    """Score, band and place one workbook in the matrix."""
    m_score, m_ids = score_materiality(facts, record, config.materiality_rules)
    c_score, c_ids = score_complexity(profile, config.complexity_rules)
    m_band = band(m_score, config.materiality_scale)
    c_band = band(c_score, config.complexity_scale)
    return RiskAssessment(
        materiality_score=m_score,
        complexity_score=c_score,
        matched_materiality_rule_ids=m_ids,
        matched_complexity_rule_ids=c_ids,
        materiality_band=m_band,
        complexity_band=c_band,
        risk=assess(m_band, c_band, config.matrix),
    )


def raise_materiality(assessment: RiskAssessment, to_band: str, matrix: RiskMatrix) -> RiskAssessment:
    """Inherited criticality: lift the effective materiality band and re-look-up risk."""
    return replace(
        assessment,
        inherited_critical=True,
        effective_materiality_band=to_band,
        risk=matrix.lookup(to_band, assessment.complexity_band),
    )
