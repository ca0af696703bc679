"""Inter-workbook data-feed graph and upstream criticality propagation.

Edges point along the data flow: ``feeder -> dependent``. A feeder of a
critical workbook inherits the top materiality band; its own complexity
band is untouched.
"""

from __future__ import annotations

import posixpath
import re
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence
from urllib.parse import unquote

from sheetrisk.discovery import FileRecord
from sheetrisk.risk import RiskAssessment, RiskMatrix, raise_materiality

_DRIVE = re.compile(r"^[A-Za-z]:/")


@dataclass(frozen=True)
class LinkNode:
    file_id: str
    resolved: bool


@dataclass(frozen=True)
class LinkEdge:
    feeder: str
    dependent: str
    source: str = "external-part"  # external-part | formula-ref


@dataclass
class LinkGraph:
    nodes: dict[str, LinkNode] = field(default_factory=dict)
    edges: list[LinkEdge] = field(default_factory=list)

    def feeders_of(self) -> dict[str, list[str]]:
        """dependent -> feeders (reverse adjacency)."""
        rev: dict[str, list[str]] = {n: [] for n in self.nodes}
        for e in self.edges:
            rev[e.dependent].append(e.feeder)
        return rev

    def degree(self, file_id: str) -> int:
        return sum(1 for e in self.edges if file_id in (e.feeder, e.dependent))

    def edge_lines(self) -> list[str]:
        """``feeder<TAB>dependent<TAB>resolved-flag`` lines, sorted.

        The flag reports whether the feeder resolved to an inventory record.
        """
        lines = []
        for e in self.edges:
            flag = "resolved" if self.nodes[e.feeder].resolved else "unresolved"
            lines.append(f"{e.feeder}\t{e.dependent}\t{flag}")
        return sorted(lines)

    @property
    def dangling(self) -> list[str]:
        return sorted(n.file_id for n in self.nodes.values() if not n.resolved)


def normalize_target(target: str, referencing_path: str) -> str:
    """Lexically resolve an external-link target against the referencing
    workbook's directory. No filesystem access."""
    t = target.strip()
    lowered = t.lower()
    if lowered.startswith("file:"):
        t = t[5:]
        t = re.sub(r"^/{2,}", "//", t)
        if re.match(r"^/+[A-Za-z]:", t):
            t = t.lstrip("/")
    t = unquote(t).replace("\\", "/")
    if re.match(r"^[a-z][a-z0-9+.-]+:", t, re.I) and not _DRIVE.match(t):
        return t  # http:, dde:, ... left as-is
    base_dir = posixpath.dirname(referencing_path.replace("\\", "/"))
    if t.startswith("/") or _DRIVE.match(t):
        joined = t
    else:
        joined = posixpath.join(base_dir, t)
    if joined.startswith("//"):
        return "//" + posixpath.normpath(joined[2:])
    return posixpath.normpath(joined)


def _key(path: str) -> str:
    return path.replace("\\", "/").lower()


def build_graph(
    records: Sequence[FileRecord],
    targets: Mapping[str, Iterable[tuple[str, str]] | Iterable[str]],
) -> LinkGraph:
    """Graph over inventory records plus dangling external targets.

    ``targets`` maps record identity to its raw external targets, either as
    plain strings or ``(target, source)`` pairs. Only top-level (on-disk)
    records are addressable by a link target.
    """
    graph = LinkGraph()
    by_path: dict[str, str] = {}
    for rec in records:
        graph.nodes[rec.identity] = LinkNode(rec.identity, True)
        if not rec.container_chain:
            by_path.setdefault(_key(rec.path), rec.identity)
    seen: set[tuple[str, str]] = set()
    for rec in records:
        dependent = rec.identity
        for item in targets.get(dependent, ()):
            raw, source = (item, "external-part") if isinstance(item, str) else item
            if not raw or raw.startswith("["):
                continue  # unresolvable index placeholder
            normalized = normalize_target(raw, rec.path)
            feeder = by_path.get(_key(normalized))
            if feeder is None:
                feeder = normalized
                graph.nodes.setdefault(feeder, LinkNode(feeder, False))
            if (feeder, dependent) in seen or feeder == dependent:
                continue
            seen.add((feeder, dependent))
            graph.edges.append(LinkEdge(feeder, dependent, source))
    return graph


def propagate_criticality(
    graph: LinkGraph,
    assessments: Mapping[str, RiskAssessment],
    matrix: RiskMatrix,
    critical_band: str = "CRITICAL",
) -> dict[str, RiskAssessment]:
    """Mark every upstream feeder of a critical workbook as inherited-critical.

    Seeds are nodes whose own materiality band is ``critical_band``; a
    reverse breadth-first search over feeder edges reaches the transitive
    closure and terminates on cycles. Seeds themselves are returned as-is.
    """
    out = dict(assessments)
    feeders = graph.feeders_of()
    seeds = [fid for fid, a in assessments.items() if a.materiality_band == critical_band]
    reached: set[str] = set(seeds)
    queue = deque(seeds)
    while queue:
        node = queue.popleft()
        for feeder in feeders.get(node, ()):
            if feeder not in reached:
                reached.add(feeder)
                queue.append(feeder)
    for fid in reached:
        a = out.get(fid)
        if a is None or a.materiality_band == critical_band:
            continue
        out[fid] = raise_materiality(a, critical_band, matrix)
    return out

