"""Find spreadsheets under scan roots by content, including inside ZIP archives.

Nothing here writes to the scanned trees: files are opened ``rb`` only and
archives are expanded in memory.
"""

from __future__ import annotations

import fnmatch
import hashlib
import io
import logging
import os
import posixpath
import zipfile
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from enum import Enum
from typing import BinaryIO, Iterator, Optional, Sequence, Union
from xml.etree import ElementTree as ET

import olefile

from sheetrisk.errors import DiscoveryError, ScanError

log = logging.getLogger(__name__)

ZIP_SIGNATURE = b"PK\x03\x04"
OLE_SIGNATURE = bytes.fromhex("D0CF11E0A1B11AE1")

SPREADSHEET_EXTENSIONS = frozenset(
    {"xlsx", "xlsm", "xltx", "xltm", "xlsb", "xlam", "xls", "xlt", "xla", "xlw"}
)

_CT_NS = "{http://schemas.openxmlformats.org/package/2006/content-types}"
WORKBOOK_CONTENT_TYPES = frozenset(
    {
        "application/vnd.openxmlformats-officedocument.spreadsheetml.sheet.main+xml",
        "application/vnd.openxmlformats-officedocument.spreadsheetml.template.main+xml",
    }
)
MACRO_WORKBOOK_CONTENT_TYPES = frozenset(
    {
        "application/vnd.ms-excel.sheet.macroEnabled.main+xml",
        "application/vnd.ms-excel.template.macroEnabled.main+xml",
        "application/vnd.ms-excel.addin.macroEnabled.main+xml",
        "application/vnd.ms-excel.sheet.binary.macroEnabled.main",
    }
)
VBA_CONTENT_TYPE = "application/vnd.ms-office.vbaProject"
_MAX_CONTENT_TYPES_BYTES = 4 * 1024 * 1024
_HASH_CHUNK = 1024 * 1024


class FileKind(str, Enum):
    OOXML = "ooxml-spreadsheet"
    OOXML_MACRO = "ooxml-macro-spreadsheet"
    LEGACY = "legacy-binary-spreadsheet"
    ENCRYPTED = "encrypted-spreadsheet"
    ZIP = "zip-archive"
    OTHER = "other"

    @property
    def is_spreadsheet(self) -> bool:
        return self in SPREADSHEET_KINDS


SPREADSHEET_KINDS = frozenset(
    {FileKind.OOXML, FileKind.OOXML_MACRO, FileKind.LEGACY, FileKind.ENCRYPTED}
)


@dataclass(frozen=True)
class ScanRoot:
    path: str
    label: str = ""
    kind: str = "file-share"  # file-share | repository-export | workstation

    def __post_init__(self):
        if self.kind not in ("file-share", "repository-export", "workstation"):
            raise ValueError(f"unknown root kind {self.kind!r}")
        object.__setattr__(self, "path", os.path.abspath(self.path))


@dataclass(frozen=True)
class ArchiveLimits:
    max_depth: int = 3
    max_decompressed_bytes: int = 512 * 1024 * 1024


def _matches(pattern: str, name: str) -> bool:
    pattern, name = pattern.lower(), name.lower()
    if any(c in pattern for c in "*?["):
        return fnmatch.fnmatchcase(name, pattern)
    return pattern in name


@dataclass(frozen=True)
class ScanFilter:
    """Narrowing criteria, OR-ed together; no active criterion admits all."""

    name_patterns: tuple[str, ...] = ()
    modified_windows: tuple[tuple[date, date], ...] = ()
    since_last_scan: bool = False
    max_file_size_bytes: int = 2 * 1024 ** 3
    follow_symlinks: bool = False

    def __post_init__(self):
        object.__setattr__(self, "name_patterns", tuple(self.name_patterns))
        object.__setattr__(
            self, "modified_windows", tuple(tuple(w) for w in self.modified_windows)
        )
        for start, end in self.modified_windows:
            if start > end:
                raise ValueError(f"window start {start} is after end {end}")
        if self.max_file_size_bytes <= 0:
            raise ValueError("max_file_size_bytes must be positive")

    def admits(
        self,
        name: str,
        modified_at: datetime,
        created_at: Optional[datetime] = None,
        last_scan_at: Optional[datetime] = None,
    ) -> bool:
        active = []
        if self.name_patterns:
            active.append(any(_matches(p, name) for p in self.name_patterns))
        if self.modified_windows:
            days = [ts.astimezone(timezone.utc).date() for ts in (modified_at, created_at) if ts]
            active.append(
                any(start <= d <= end for d in days for start, end in self.modified_windows)
            )
        if self.since_last_scan and last_scan_at is not None:
            active.append(modified_at > last_scan_at)
        return not active or any(active)


@dataclass(frozen=True)
class FileRecord:
    path: str
    container_chain: tuple[str, ...]
    size_bytes: int
    modified_at: datetime
    created_at: Optional[datetime]
    content_hash: str
    kind: FileKind
    extension: str
    extension_mismatch: bool

    @property
    def identity(self) -> str:
        return "!".join((self.path,) + self.container_chain)

    @property
    def name(self) -> str:
        """Base name of the innermost file."""
        if self.container_chain:
            return posixpath.basename(self.container_chain[-1])
        return os.path.basename(self.path)

    @property
    def sort_key(self) -> tuple:
        return (self.path, self.container_chain)

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "container_chain": list(self.container_chain),
            "size_bytes": self.size_bytes,
            "modified_at": format_ts(self.modified_at),
            "created_at": format_ts(self.created_at) if self.created_at else None,
            "content_hash": self.content_hash,
            "kind": self.kind.value,
            "extension": self.extension,
            "extension_mismatch": self.extension_mismatch,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FileRecord":
        return cls(
            path=d["path"],
            container_chain=tuple(d["container_chain"]),
            size_bytes=int(d["size_bytes"]),
            modified_at=parse_ts(d["modified_at"]),
            created_at=parse_ts(d["created_at"]) if d.get("created_at") else None,
            content_hash=d["content_hash"],
            kind=FileKind(d["kind"]),
            extension=d["extension"],
            extension_mismatch=bool(d["extension_mismatch"]),
        )


def format_ts(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def parse_ts(text: str) -> datetime:
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def extension_of(name: str) -> str:
    base = posixpath.basename(name.replace("\\", "/"))
    _, dot, ext = base.rpartition(".")
    return ext.lower() if dot and _ else ""


def extension_mismatch(kind: FileKind, extension: str) -> bool:
    claims = extension in SPREADSHEET_EXTENSIONS
    return kind.is_spreadsheet != claims


# -- sniffing ----------------------------------------------------------------

Source = Union[bytes, bytearray, str, os.PathLike, BinaryIO]


def _as_stream(source: Source):
    if isinstance(source, (bytes, bytearray)):
        return io.BytesIO(source), True
    if isinstance(source, (str, os.PathLike)):
        return open(source, "rb"), True
    source.seek(0)
    return source, False


def sniff_kind(source: Source) -> FileKind:
    """Classify a file from its bytes alone. Never writes.

    ``OSError`` from opening a path propagates; callers turn it into an
    ``access-denied`` scan error.
    """
    fh, owned = _as_stream(source)
    try:
        head = fh.read(8)
        if head[:4] == ZIP_SIGNATURE:
            fh.seek(0)
            return _sniff_zip(fh)
        if head == OLE_SIGNATURE:
            fh.seek(0)
            return _sniff_ole(fh)
        return FileKind.OTHER
    finally:
        if owned:
            fh.close()


def _sniff_zip(fh: BinaryIO) -> FileKind:
    try:
        with zipfile.ZipFile(fh) as zf:
            names = zf.namelist()
            if "[Content_Types].xml" not in names:
                return FileKind.ZIP
            info = zf.getinfo("[Content_Types].xml")
            if info.file_size > _MAX_CONTENT_TYPES_BYTES:
                return FileKind.ZIP
            types = _content_types(zf.read(info))
    except (zipfile.BadZipFile, zlib.error, NotImplementedError, RuntimeError, EOFError, ValueError):
        return FileKind.OTHER
    except ET.ParseError:
        return FileKind.ZIP
    if types & MACRO_WORKBOOK_CONTENT_TYPES:
        return FileKind.OOXML_MACRO
    if types & WORKBOOK_CONTENT_TYPES:
        if VBA_CONTENT_TYPE in types or any(n.lower().endswith("vbaproject.bin") for n in names):
            return FileKind.OOXML_MACRO
        return FileKind.OOXML
    return FileKind.ZIP


def _content_types(xml: bytes) -> set[str]:
    root = ET.fromstring(xml)
    return {
        el.get("ContentType", "")
        for el in root
        if el.tag in (_CT_NS + "Override", _CT_NS + "Default")
    }


def _sniff_ole(fh: BinaryIO) -> FileKind:
    try:
        ole = olefile.OleFileIO(fh)
    except Exception:  # olefile raises a grab bag on malformed containers
        return FileKind.OTHER
    try:
        streams = {"/".join(p).lower() for p in ole.listdir(streams=True, storages=False)}
    except Exception:
        return FileKind.OTHER
    finally:
        ole.close()
    if "encryptioninfo" in streams and "encryptedpackage" in streams:
        return FileKind.ENCRYPTED
    if "workbook" in streams or "book" in streams:
        return FileKind.LEGACY
    return FileKind.OTHER


def _hash_stream(fh: BinaryIO) -> str:
    h = hashlib.sha256()
    for chunk in iter(lambda: fh.read(_HASH_CHUNK), b""):
        h.update(chunk)
    return h.hexdigest()


# -- walking -----------------------------------------------------------------


def _stat_times(st: os.stat_result) -> tuple[datetime, Optional[datetime]]:
    modified = datetime.fromtimestamp(st.st_mtime, tz=timezone.utc)
    birth = getattr(st, "st_birthtime", None)
    if birth is None and os.name == "nt":
        birth = st.st_ctime
    created = datetime.fromtimestamp(birth, tz=timezone.utc) if birth is not None else None
    return modified, created


def _candidate_files(root: str, follow_symlinks: bool, errors: list) -> Iterator[tuple[str, os.stat_result]]:
    """Depth-first, lexicographic per directory."""
    seen_dirs: set[tuple[int, int]] = set()
    stack = [root]
    while stack:
        directory = stack.pop()
        try:
            st = os.stat(directory)
            key = (st.st_dev, st.st_ino)
            if key in seen_dirs:
                continue
            seen_dirs.add(key)
            with os.scandir(directory) as it:
                entries = sorted(it, key=lambda e: e.name)
        except OSError as exc:
            errors.append(ScanError("access-denied", directory, (), str(exc)))
            continue
        subdirs = []
        for entry in entries:
            try:
                if entry.is_symlink() and not follow_symlinks:
                    continue
                if entry.is_dir(follow_symlinks=follow_symlinks):
                    subdirs.append(entry.path)
                elif entry.is_file(follow_symlinks=follow_symlinks):
                    yield entry.path, entry.stat(follow_symlinks=follow_symlinks)
            except OSError as exc:
                errors.append(ScanError("access-denied", entry.path, (), str(exc)))
        stack.extend(reversed(subdirs))


def _inspect_file(path: str, st: os.stat_result, errors: list) -> Optional[FileRecord]:
    try:
        with open(path, "rb") as fh:
            head = fh.read(8)
            if head[:4] != ZIP_SIGNATURE and head != OLE_SIGNATURE:
                return None
            kind = sniff_kind(fh)
            if kind is FileKind.OTHER:
                if head[:4] == ZIP_SIGNATURE:
                    errors.append(ScanError("corrupt-archive", path, (), "zip signature but unreadable archive"))
                return None
            fh.seek(0)
            digest = _hash_stream(fh)
    except OSError as exc:
        errors.append(ScanError("access-denied", path, (), str(exc)))
        return None
    modified, created = _stat_times(st)
    ext = extension_of(path)
    return FileRecord(
        path=os.path.abspath(path),
        container_chain=(),
        size_bytes=st.st_size,
        modified_at=modified,
        created_at=created,
        content_hash=digest,
        kind=kind,
        extension=ext,
        extension_mismatch=extension_mismatch(kind, ext),
    )


def walk(
    root: ScanRoot,
    filter: ScanFilter = ScanFilter(),
    last_scan_at: Optional[datetime] = None,
    *,
    errors: Optional[list] = None,
    workers: int = 8,
) -> Iterator[FileRecord]:
    """Yield spreadsheet and ZIP-archive records under ``root``.

    Filters apply to spreadsheet records only; archives are always yielded so
    their entries can be filtered after expansion.
    """
    errors = [] if errors is None else errors
    if not os.path.isdir(root.path):
        errors.append(ScanError("root-unreadable", root.path, (), "not a readable directory"))
        return
    candidates = []
    for path, st in _candidate_files(root.path, filter.follow_symlinks, errors):
        if st.st_size > filter.max_file_size_bytes:
            errors.append(ScanError("file-too-large", path, (), f"{st.st_size} bytes"))
            continue
        candidates.append((path, st))

    def inspect(item):
        return _inspect_file(item[0], item[1], errors)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for rec in pool.map(inspect, candidates):
            if rec is None:
                continue
            if rec.kind is FileKind.ZIP or filter.admits(
                rec.name, rec.modified_at, rec.created_at, last_scan_at
            ):
                yield rec


# -- archives ----------------------------------------------------------------


@dataclass
class _Budget:
    remaining: int


def read_record_bytes(record: FileRecord) -> bytes:
    """Bytes of a record, following its container chain through archives."""
    with open(record.path, "rb") as fh:
        data = fh.read()
    for member in record.container_chain:
        with zipfile.ZipFile(io.BytesIO(data)) as zf:
            data = zf.read(member)
    return data


def _read_entry(zf: zipfile.ZipFile, info: zipfile.ZipInfo, budget: _Budget) -> Optional[bytes]:
    """Entry bytes, or None when the decompressed budget runs out."""
    if info.file_size > budget.remaining:
        return None
    out = bytearray()
    with zf.open(info) as fh:
        while True:
            chunk = fh.read(_HASH_CHUNK)
            if not chunk:
                break
            out += chunk
            if len(out) > budget.remaining:
                return None
    budget.remaining -= len(out)
    return bytes(out)


def expand_archive(
    record: FileRecord,
    depth: int = 0,
    *,
    source: Optional[bytes] = None,
    limits: ArchiveLimits = ArchiveLimits(),
    errors: Optional[list] = None,
    filter: Optional[ScanFilter] = None,
    last_scan_at: Optional[datetime] = None,
    _budget: Optional[_Budget] = None,
) -> list[FileRecord]:
    """Spreadsheet records found inside a ZIP archive, recursively.

    Spreadsheet inputs are terminal and yield ``[]``. Nested archives are
    opened while the resulting chain stays within ``limits.max_depth``;
    total decompressed bytes per outer archive are capped by
    ``limits.max_decompressed_bytes`` and partial results are kept when
    the cap is hit.
    """
    errors = [] if errors is None else errors
    if record.kind is not FileKind.ZIP:
        return []
    budget = _budget or _Budget(limits.max_decompressed_bytes)
    found: list[FileRecord] = []
    try:
        data = source if source is not None else read_record_bytes(record)
    except (OSError, zipfile.BadZipFile, KeyError) as exc:
        errors.append(ScanError("access-denied", record.path, record.container_chain, str(exc)))
        return found
    try:
        zf = zipfile.ZipFile(io.BytesIO(data))
    except (zipfile.BadZipFile, ValueError, EOFError) as exc:
        errors.append(ScanError("corrupt-archive", record.path, record.container_chain, str(exc)))
        return found
    with zf:
        for info in zf.infolist():
            if info.is_dir():
                continue
            chain = record.container_chain + (info.filename,)
            try:
                entry = _read_entry(zf, info, budget)
            except (zipfile.BadZipFile, zlib.error, NotImplementedError, RuntimeError, EOFError, ValueError) as exc:
                errors.append(ScanError("corrupt-archive", record.path, chain, str(exc)))
                continue
            if entry is None:
                errors.append(
                    ScanError(
                        "archive-budget-exceeded",
                        record.path,
                        chain,
                        f"decompressed size budget of {limits.max_decompressed_bytes} bytes exhausted",
                    )
                )
                break
            kind = sniff_kind(entry)
            if kind is FileKind.OTHER:
                if entry[:4] == ZIP_SIGNATURE:
                    errors.append(ScanError("corrupt-archive", record.path, chain, "zip signature but unreadable archive"))
                continue
            ext = extension_of(info.filename)
            modified = datetime(*info.date_time, tzinfo=timezone.utc)
            nested = FileRecord(
                path=record.path,
                container_chain=chain,
                size_bytes=len(entry),
                modified_at=modified,
                created_at=None,
                content_hash=hashlib.sha256(entry).hexdigest(),
                kind=kind,
                extension=ext,
                extension_mismatch=extension_mismatch(kind, ext),
            )
            if kind is FileKind.ZIP:
                if depth + 1 < limits.max_depth:
                    found.extend(
                        expand_archive(
                            nested, depth + 1, source=entry, limits=limits, errors=errors,
                            filter=filter, last_scan_at=last_scan_at, _budget=budget,
                        )
                    )
                else:
                    errors.append(
                        ScanError("archive-depth-exceeded", record.path, chain,
                                  f"nesting deeper than {limits.max_depth}")
                    )
                continue
            if filter is None or filter.admits(nested.name, modified, None, last_scan_at):
                found.append(nested)
    return found


@dataclass
class DiscoveryResult:
    records: list[FileRecord] = field(default_factory=list)
    errors: list[ScanError] = field(default_factory=list)

    def __iter__(self):
        # allows ``records, errors = discover(...)``
        return iter((self.records, self.errors))


def discover(
    roots: Sequence[ScanRoot],
    filter: ScanFilter = ScanFilter(),
    last_scan_at: Optional[datetime] = None,
    *,
    limits: ArchiveLimits = ArchiveLimits(),
    workers: int = 8,
) -> DiscoveryResult:
    """Walk every root, expand archives, dedupe and sort.

    Only spreadsheet kinds are returned; archive containers themselves are
    expanded and dropped. Raises ``no-roots-scanned`` when no root could be
    read.
    """
    if not roots:
        raise DiscoveryError("no-roots-scanned", "no scan roots configured")
    errors: list[ScanError] = []
    archives: list[FileRecord] = []
    by_identity: dict[tuple, FileRecord] = {}
    readable = 0
    for root in roots:
        if not os.path.isdir(root.path):
            errors.append(ScanError("root-unreadable", root.path, (), "not a readable directory"))
            continue
        readable += 1
        log.debug("walking %s (%s)", root.path, root.label or root.kind)
        for rec in walk(root, filter, last_scan_at, errors=errors, workers=workers):
            if rec.kind is FileKind.ZIP:
                archives.append(rec)
            else:
                by_identity.setdefault(rec.sort_key, rec)
    if readable == 0:
        raise DiscoveryError(
            "no-roots-scanned", [f"{e.path}: {e.message}" for e in errors if e.code == "root-unreadable"]
        )

    def expand(rec):
        return expand_archive(rec, 0, limits=limits, errors=errors, filter=filter, last_scan_at=last_scan_at)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for nested in pool.map(expand, archives):
            for rec in nested:
                by_identity.setdefault(rec.sort_key, rec)
    records = sorted(by_identity.values(), key=lambda r: r.sort_key)
    errors.sort(key=lambda e: (e.path, e.container_chain, e.code))
    return DiscoveryResult(records, errors)
