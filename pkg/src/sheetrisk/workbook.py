"""Read-only structural extraction from OOXML workbooks.

Only stored values are read; no formula is ever evaluated. Parts are
located through the package relationships, so both the transitional and
the strict SpreadsheetML namespaces work (tags are matched by local name).
"""

from __future__ import annotations

import colorsys
import io
import os
import posixpath
import re
import zipfile
import zlib
from dataclasses import dataclass, field
from typing import Optional
from xml.etree import ElementTree as ET

from sheetrisk.discovery import (
    MACRO_WORKBOOK_CONTENT_TYPES,
    VBA_CONTENT_TYPE,
    FileKind,
    FileRecord,
    _content_types,
    read_record_bytes,
)
from sheetrisk.errors import WorkbookError
from sheetrisk.formula import ERROR_LITERALS, shift_formula

MAX_PART_BYTES = 512 * 1024 * 1024

# Default 64-entry indexed palette; 64/65 are the system foreground/background.
INDEXED_COLORS = (
    "000000", "FFFFFF", "FF0000", "00FF00", "0000FF", "FFFF00", "FF00FF", "00FFFF",
    "000000", "FFFFFF", "FF0000", "00FF00", "0000FF", "FFFF00", "FF00FF", "00FFFF",
    "800000", "008000", "000080", "808000", "800080", "008080", "C0C0C0", "808080",
    "9999FF", "993366", "FFFFCC", "CCFFFF", "660066", "FF8080", "0066CC", "CCCCFF",
    "000080", "FF00FF", "FFFF00", "00FFFF", "800080", "800000", "008080", "0000FF",
    "00CCFF", "CCFFFF", "CCFFCC", "FFFF99", "99CCFF", "FF99CC", "CC99FF", "FFCC99",
    "3366FF", "33CCCC", "99CC00", "FFCC00", "FF9900", "FF6600", "666699", "969696",
    "003366", "339966", "003300", "333300", "993300", "993366", "333399", "333333",
)
SYSTEM_FOREGROUND = "000000"
SYSTEM_BACKGROUND = "FFFFFF"

BUILTIN_NUMBER_FORMATS = {
    0: "General", 1: "0", 2: "0.00", 3: "#,##0", 4: "#,##0.00",
    5: '"$"#,##0_);("$"#,##0)',
    6: '"$"#,##0_);[Red]("$"#,##0)',
    7: '"$"#,##0.00_);("$"#,##0.00)',
    8: '"$"#,##0.00_);[Red]("$"#,##0.00)',
    9: "0%", 10: "0.00%", 11: "0.00E+00", 12: "# ?/?", 13: "# ??/??",
    14: "mm-dd-yy", 15: "d-mmm-yy", 16: "d-mmm", 17: "mmm-yy",
    18: "h:mm AM/PM", 19: "h:mm:ss AM/PM", 20: "h:mm", 21: "h:mm:ss", 22: "m/d/yy h:mm",
    37: "#,##0_);(#,##0)", 38: "#,##0_);[Red](#,##0)",
    39: "#,##0.00_);(#,##0.00)", 40: "#,##0.00_);[Red](#,##0.00)",
    41: '_(* #,##0_);_(* \\(#,##0\\);_(* "-"_);_(@_)',
    42: '_("$"* #,##0_);_("$"* \\(#,##0\\);_("$"* "-"_);_(@_)',
    43: '_(* #,##0.00_);_(* \\(#,##0.00\\);_(* "-"??_);_(@_)',
    44: '_("$"* #,##0.00_);_("$"* \\(#,##0.00\\);_("$"* "-"??_);_(@_)',
    45: "mm:ss", 46: "[h]:mm:ss", 47: "mmss.0", 48: "##0.0E+0", 49: "@",
}

# theme color index -> clrScheme slot; the first two pairs are swapped
_THEME_SLOTS = ("lt1", "dk1", "lt2", "dk2", "accent1", "accent2", "accent3",
                "accent4", "accent5", "accent6", "hlink", "folHlink")


@dataclass(frozen=True)
class SheetFacts:
    name: str
    visibility: str = "visible"  # visible | hidden | very-hidden
    hidden_row_count: int = 0
    hidden_column_count: int = 0
    protected: bool = False


@dataclass(frozen=True)
class CellSnapshot:
    sheet: str
    ref: str
    value_kind: str  # number | text | boolean | error | empty
    cached_value: str
    number_format: str = "General"
    font_color: Optional[str] = None
    fill_color: Optional[str] = None
    in_hidden_row: bool = False
    in_hidden_column: bool = False


@dataclass(frozen=True)
class FormulaFacts:
    sheet: str
    ref: str
    text: str
    is_array: bool = False


@dataclass
class WorkbookFacts:
    sheets: list[SheetFacts] = field(default_factory=list)
    cells: list[CellSnapshot] = field(default_factory=list)
    formulas: list[FormulaFacts] = field(default_factory=list)
    defined_names: list[str] = field(default_factory=list)
    # one entry per workbook external reference, in index order ([1] is first)
    external_targets: list[str] = field(default_factory=list)
    has_macros: bool = False
    encrypted: bool = False
    workbook_protected: bool = False
    doc_properties: dict[str, str] = field(default_factory=dict)
    size_bytes: int = 0

    @property
    def password_protected(self) -> bool:
        return self.encrypted or self.workbook_protected or any(s.protected for s in self.sheets)


# -- helpers -----------------------------------------------------------------


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _rid(el: ET.Element) -> Optional[str]:
    for key, value in el.attrib.items():
        if key.startswith("{") and "relationships" in key and _local(key) == "id":
            return value
    return None


def _truthy(value: Optional[str]) -> bool:
    return value is not None and value.strip().lower() in ("1", "true", "on")


def _rgb(value: Optional[str]) -> Optional[str]:
    if not value:
        return None
    value = value.strip().upper()
    if len(value) == 8:
        value = value[2:]
    return value if re.fullmatch(r"[0-9A-F]{6}", value) else None


def _apply_tint(rgb: str, tint: float) -> str:
    r, g, b = (int(rgb[i:i + 2], 16) / 255 for i in (0, 2, 4))
    h, l, s = colorsys.rgb_to_hls(r, g, b)
    if tint < 0:
        l = l * (1 + tint)
    else:
        l = l * (1 - tint) + tint
    r, g, b = colorsys.hls_to_rgb(h, l, s)
    return "".join(f"{round(c * 255):02X}" for c in (r, g, b))


def _split_ref(ref: str) -> tuple[int, int]:
    m = re.fullmatch(r"\$?([A-Za-z]{1,3})\$?([0-9]+)", ref)
    if not m:
        raise ValueError(ref)
    col = 0
    for ch in m.group(1).upper():
        col = col * 26 + ord(ch) - 64
    return int(m.group(2)), col


def _col_letters(col: int) -> str:
    out = ""
    while col > 0:
        col, rem = divmod(col - 1, 26)
        out = chr(65 + rem) + out
    return out


class _Package:
    """Thin relationship-aware view over the workbook ZIP."""

    def __init__(self, zf: zipfile.ZipFile):
        self.zf = zf
        self.names = set(zf.namelist())

    def read(self, name: str) -> bytes:
        info = self.zf.getinfo(name)
        if info.file_size > MAX_PART_BYTES:
            raise WorkbookError("corrupt-workbook", f"part {name} exceeds {MAX_PART_BYTES} bytes")
        return self.zf.read(info)

    def xml(self, name: str) -> ET.Element:
        return ET.fromstring(self.read(name))

    def open(self, name: str):
        info = self.zf.getinfo(name)
        if info.file_size > MAX_PART_BYTES:
            raise WorkbookError("corrupt-workbook", f"part {name} exceeds {MAX_PART_BYTES} bytes")
        return self.zf.open(info)

    def rels(self, part: str) -> dict[str, tuple[str, str, str]]:
        """rId -> (type suffix, resolved target, target mode)."""
        directory, base = posixpath.split(part)
        rels_name = posixpath.join(directory, "_rels", base + ".rels")
        if rels_name not in self.names:
            return {}
        out = {}
        for rel in self.xml(rels_name):
            rtype = rel.get("Type", "").rsplit("/", 1)[-1]
            target = rel.get("Target", "")
            mode = rel.get("TargetMode", "Internal")
            if mode != "External":
                if target.startswith("/"):
                    target = target.lstrip("/")
                else:
                    target = posixpath.normpath(posixpath.join(directory, target))
            out[rel.get("Id", "")] = (rtype, target, mode)
        return out


# -- styles ------------------------------------------------------------------


@dataclass
class _Styles:
    formats: list[str] = field(default_factory=list)
    fonts: list[Optional[str]] = field(default_factory=list)
    fills: list[Optional[str]] = field(default_factory=list)

    def lookup(self, index: int) -> tuple[str, Optional[str], Optional[str]]:
        if 0 <= index < len(self.formats):
            return self.formats[index], self.fonts[index], self.fills[index]
        return "General", SYSTEM_FOREGROUND, SYSTEM_BACKGROUND


class _ColorResolver:
    def __init__(self, theme: dict[str, str], indexed: tuple[str, ...]):
        self.theme = theme
        self.indexed = indexed

    def resolve(self, el: Optional[ET.Element], default: Optional[str]) -> Optional[str]:
        if el is None:
            return default
        rgb: Optional[str] = None
        if el.get("rgb") is not None:
            rgb = _rgb(el.get("rgb"))
        elif el.get("theme") is not None:
            try:
                slot = _THEME_SLOTS[int(el.get("theme"))]
            except (ValueError, IndexError):
                return None
            rgb = self.theme.get(slot)
        elif el.get("indexed") is not None:
            try:
                idx = int(el.get("indexed"))
            except ValueError:
                return None
            if idx == 64:
                rgb = SYSTEM_FOREGROUND
            elif idx == 65:
                rgb = SYSTEM_BACKGROUND
            elif 0 <= idx < len(self.indexed):
                rgb = self.indexed[idx]
        elif _truthy(el.get("auto")):
            return default
        if rgb is None:
            return None
        tint = el.get("tint")
        if tint:
            try:
                rgb = _apply_tint(rgb, float(tint))
            except ValueError:
                return None
        return rgb


def _parse_theme(root: ET.Element) -> dict[str, str]:
    colors: dict[str, str] = {}
    for el in root.iter():
        if _local(el.tag) != "clrScheme":
            continue
        for slot in el:
            name = _local(slot.tag)
            for spec in slot:
                kind = _local(spec.tag)
                value = spec.get("lastClr") if kind == "sysClr" else spec.get("val")
                if kind in ("srgbClr", "sysClr") and _rgb(value):
                    colors[name] = _rgb(value)
        break
    return colors


def _parse_styles(root: Optional[ET.Element], theme: dict[str, str]) -> _Styles:
    styles = _Styles()
    if root is None:
        return styles
    custom_formats: dict[int, str] = {}
    fonts_el = fills_el = xfs_el = None
    indexed = INDEXED_COLORS
    for child in root:
        name = _local(child.tag)
        if name == "numFmts":
            for nf in child:
                try:
                    custom_formats[int(nf.get("numFmtId", ""))] = nf.get("formatCode", "")
                except ValueError:
                    pass
        elif name == "fonts":
            fonts_el = child
        elif name == "fills":
            fills_el = child
        elif name == "cellXfs":
            xfs_el = child
        elif name == "colors":
            for sub in child:
                if _local(sub.tag) == "indexedColors":
                    custom = tuple(_rgb(c.get("rgb")) or "000000" for c in sub)
                    if custom:
                        indexed = custom
    resolver = _ColorResolver(theme, indexed)

    font_colors: list[Optional[str]] = []
    for font in fonts_el if fonts_el is not None else ():
        color = next((c for c in font if _local(c.tag) == "color"), None)
        font_colors.append(resolver.resolve(color, SYSTEM_FOREGROUND))

    fill_colors: list[Optional[str]] = []
    for fill in fills_el if fills_el is not None else ():
        pattern = next((c for c in fill if _local(c.tag) == "patternFill"), None)
        if pattern is None:
            fill_colors.append(None)  # gradient fills: unresolvable
            continue
        ptype = pattern.get("patternType")
        if ptype in (None, "none"):
            fill_colors.append(SYSTEM_BACKGROUND)
        elif ptype == "solid":
            fg = next((c for c in pattern if _local(c.tag) == "fgColor"), None)
            fill_colors.append(resolver.resolve(fg, None) if fg is not None else None)
        else:
            fill_colors.append(None)

    for xf in xfs_el if xfs_el is not None else ():
        try:
            fmt_id = int(xf.get("numFmtId", "0"))
            font_id = int(xf.get("fontId", "0"))
            fill_id = int(xf.get("fillId", "0"))
        except ValueError:
            fmt_id = font_id = fill_id = 0
        fmt = custom_formats.get(fmt_id, BUILTIN_NUMBER_FORMATS.get(fmt_id, "General"))
        styles.formats.append(fmt)
        styles.fonts.append(font_colors[font_id] if 0 <= font_id < len(font_colors) else SYSTEM_FOREGROUND)
        styles.fills.append(fill_colors[fill_id] if 0 <= fill_id < len(fill_colors) else SYSTEM_BACKGROUND)
    return styles


# -- shared strings, properties ---------------------------------------------


def _text_of(el: ET.Element) -> str:
    """Concatenated <t> text of a string item, skipping phonetic runs."""
    parts = []
    for child in el:
        name = _local(child.tag)
        if name == "t":
            parts.append(child.text or "")
        elif name == "r":
            parts.extend(t.text or "" for t in child if _local(t.tag) == "t")
    return "".join(parts)


def _parse_shared_strings(pkg: _Package, name: str) -> list[str]:
    strings = []
    with pkg.open(name) as fh:
        for _, el in ET.iterparse(fh, events=("end",)):
            if _local(el.tag) == "si":
                strings.append(_text_of(el))
                el.clear()
    return strings


def _parse_properties(pkg: _Package, parts: dict[str, str]) -> dict[str, str]:
    props: dict[str, str] = {}
    for kind in ("core-properties", "extended-properties"):
        name = parts.get(kind)
        if name and name in pkg.names:
            for el in pkg.xml(name):
                if len(el) == 0 and el.text and el.text.strip():
                    props[_local(el.tag)] = el.text.strip()
    name = parts.get("custom-properties")
    if name and name in pkg.names:
        for prop in pkg.xml(name):
            key = prop.get("name")
            value = next((v.text for v in prop if v.text), None)
            if key and value is not None:
                props[key] = value.strip()
    return props


# -- worksheets --------------------------------------------------------------


@dataclass
class _SheetResult:
    cells: list[CellSnapshot]
    formulas: list[FormulaFacts]
    hidden_rows: int
    hidden_cols: int
    protected: bool


def _parse_worksheet(pkg: _Package, part: str, sheet: str, styles: _Styles, shared: list[str]) -> _SheetResult:
    cells: list[CellSnapshot] = []
    formulas: list[FormulaFacts] = []
    hidden_rows: set[int] = set()
    hidden_col_ranges: list[tuple[int, int]] = []
    protected = False
    shared_masters: dict[str, tuple[int, int, str]] = {}
    row_num = 0
    col_num = 0
    row_hidden = False

    def col_hidden(col: int) -> bool:
        return any(lo <= col <= hi for lo, hi in hidden_col_ranges)

    with pkg.open(part) as fh:
        for event, el in ET.iterparse(fh, events=("start", "end")):
            name = _local(el.tag)
            if event == "start":
                if name == "row":
                    r = el.get("r")
                    row_num = int(r) if r and r.isascii() and r.isdigit() else row_num + 1
                    col_num = 0
                    ht = el.get("ht")
                    row_hidden = _truthy(el.get("hidden"))
                    if ht is not None:
                        try:
                            row_hidden = row_hidden or float(ht) == 0
                        except ValueError:
                            pass
                    if row_hidden:
                        hidden_rows.add(row_num)
                continue
            if name == "col":
                width = el.get("width")
                zero = False
                if width is not None:
                    try:
                        zero = float(width) == 0
                    except ValueError:
                        pass
                if _truthy(el.get("hidden")) or zero:
                    try:
                        hidden_col_ranges.append((int(el.get("min")), int(el.get("max"))))
                    except (TypeError, ValueError):
                        pass
            elif name == "c":
                ref = el.get("r")
                if ref:
                    try:
                        _, col_num = _split_ref(ref)
                    except ValueError:
                        col_num += 1
                else:
                    col_num += 1
                    ref = f"{_col_letters(col_num)}{row_num}"
                _cell(el, ref, row_num, col_num, sheet, styles, shared, shared_masters,
                      cells, formulas, row_hidden, col_hidden(col_num))
                el.clear()
            elif name == "row":
                el.clear()
            elif name == "sheetProtection":
                protected = _truthy(el.get("sheet"))
    hidden_cols = sum(hi - lo + 1 for lo, hi in hidden_col_ranges)
    return _SheetResult(cells, formulas, len(hidden_rows), hidden_cols, protected)


def _cell(el, ref, row, col, sheet, styles, shared, shared_masters, cells, formulas, in_row, in_col):
    ctype = el.get("t", "n")
    try:
        style_idx = int(el.get("s", "0"))
    except ValueError:
        style_idx = 0
    v_el = f_el = is_el = None
    for child in el:
        name = _local(child.tag)
        if name == "v":
            v_el = child
        elif name == "f":
            f_el = child
        elif name == "is":
            is_el = child
    raw = v_el.text if v_el is not None and v_el.text is not None else None

    formula_text = None
    is_array = False
    if f_el is not None:
        ftype = f_el.get("t", "normal")
        text = (f_el.text or "").strip()
        is_array = ftype == "array"
        if ftype == "shared":
            si = f_el.get("si")
            if text:
                shared_masters[si] = (row, col, text)
            elif si in shared_masters:
                mrow, mcol, mtext = shared_masters[si]
                text = shift_formula(mtext, row - mrow, col - mcol)
        if text.startswith("="):
            text = text[1:]
        formula_text = text or None

    if ctype == "inlineStr":
        kind, value = "text", _text_of(is_el) if is_el is not None else ""
        if is_el is None:
            kind = "empty"
    elif raw is None or (raw == "" and ctype != "str"):
        kind, value = "empty", ""
    elif ctype == "s":
        try:
            kind, value = "text", shared[int(raw)]
        except (ValueError, IndexError):
            kind, value = "empty", ""
    elif ctype in ("str", "d"):
        kind, value = "text", raw
    elif ctype == "b":
        kind, value = "boolean", "TRUE" if raw.strip() in ("1", "true") else "FALSE"
    elif ctype == "e":
        value = raw.strip()
        kind = "error" if value in ERROR_LITERALS else "text"
    else:
        kind, value = "number", raw.strip()

    if kind == "empty" and formula_text is None:
        return
    fmt, font, fill = styles.lookup(style_idx)
    cells.append(CellSnapshot(sheet, ref, kind, value, fmt, font, fill, in_row, in_col))
    if formula_text is not None:
        formulas.append(FormulaFacts(sheet, ref, formula_text, is_array))


# -- external links ----------------------------------------------------------


def _external_target(pkg: _Package, part: str, index: int) -> str:
    if part not in pkg.names:
        return f"[{index}]"
    rels = pkg.rels(part)
    root = pkg.xml(part)
    for el in root:
        name = _local(el.tag)
        rid = _rid(el)
        if rid and rid in rels:
            return rels[rid][1]
        if name == "ddeLink":
            return f"dde:{el.get('ddeService', '')}|{el.get('ddeTopic', '')}"
    for rtype, target, mode in rels.values():
        if mode == "External":
            return target
    return f"[{index}]"


# -- entry points ------------------------------------------------------------


def _load_bytes(record: FileRecord, byte_source) -> bytes:
    if byte_source is None:
        return read_record_bytes(record)
    if isinstance(byte_source, (bytes, bytearray)):
        return bytes(byte_source)
    if isinstance(byte_source, (str, os.PathLike)):
        with open(byte_source, "rb") as fh:
            return fh.read()
    byte_source.seek(0)
    return byte_source.read()


def parse_workbook(record: FileRecord, byte_source=None) -> WorkbookFacts:
    """Extract :class:`WorkbookFacts` from one workbook.

    ``byte_source`` may be bytes, a path or a binary stream; when omitted
    the bytes are read through ``record`` (following archive nesting).
    Encrypted workbooks yield degraded facts. Raises :class:`WorkbookError`
    with ``unsupported-format`` for legacy binary workbooks and
    ``corrupt-workbook`` for broken packages.
    """
    ident = record.identity
    if record.kind is FileKind.LEGACY:
        raise WorkbookError("unsupported-format", f"{ident}: legacy binary workbook")
    data = _load_bytes(record, byte_source)
    if record.kind is FileKind.ENCRYPTED:
        return WorkbookFacts(encrypted=True, size_bytes=len(data))
    if record.kind not in (FileKind.OOXML, FileKind.OOXML_MACRO):
        raise WorkbookError("unsupported-format", f"{ident}: not a workbook ({record.kind.value})")
    try:
        with zipfile.ZipFile(io.BytesIO(data)) as zf:
            facts = _parse_package(_Package(zf), ident)
    except WorkbookError:
        raise
    except (zipfile.BadZipFile, ET.ParseError, KeyError, zlib.error, ValueError,
            EOFError, NotImplementedError, RuntimeError) as exc:
        raise WorkbookError("corrupt-workbook", f"{ident}: {exc}") from exc
    facts.size_bytes = len(data)
    return facts


def _parse_package(pkg: _Package, ident: str) -> WorkbookFacts:
    types = _content_types(pkg.read("[Content_Types].xml")) if "[Content_Types].xml" in pkg.names else set()
    package_parts = {rtype: target for rtype, target, _ in pkg.rels("").values()}
    wb_part = package_parts.get("officeDocument", "xl/workbook.xml")
    if wb_part not in pkg.names:
        raise WorkbookError("corrupt-workbook", f"{ident}: workbook part {wb_part} missing")
    if wb_part.endswith(".bin"):
        raise WorkbookError("unsupported-format", f"{ident}: binary (xlsb) workbook part")

    wb_rels = pkg.rels(wb_part)
    by_type: dict[str, str] = {}
    for rtype, target, _ in wb_rels.values():
        by_type.setdefault(rtype, target)
    theme = {}
    if by_type.get("theme") in pkg.names:
        theme = _parse_theme(pkg.xml(by_type["theme"]))
    styles = _parse_styles(pkg.xml(by_type["styles"]) if by_type.get("styles") in pkg.names else None, theme)
    shared = []
    if by_type.get("sharedStrings") in pkg.names:
        shared = _parse_shared_strings(pkg, by_type["sharedStrings"])

    wb = pkg.xml(wb_part)
    facts = WorkbookFacts()
    facts.has_macros = bool(types & MACRO_WORKBOOK_CONTENT_TYPES) or VBA_CONTENT_TYPE in types or any(
        n.lower().endswith("vbaproject.bin") for n in pkg.names
    )
    sheet_entries = []
    for child in wb:
        name = _local(child.tag)
        if name == "sheets":
            for sh in child:
                sheet_entries.append((sh.get("name", ""), sh.get("state", "visible"), _rid(sh)))
        elif name == "definedNames":
            facts.defined_names = [dn.get("name", "") for dn in child if dn.get("name")]
        elif name == "workbookProtection":
            facts.workbook_protected = any(
                _truthy(child.get(a)) for a in ("lockStructure", "lockWindows", "lockRevision")
            ) or any(
                child.get(a) for a in ("workbookPassword", "workbookHashValue", "revisionsPassword", "revisionsHashValue")
            )
        elif name == "fileSharing":
            if child.get("reservationPassword") or child.get("hashValue"):
                facts.workbook_protected = True
        elif name == "externalReferences":
            for idx, ext in enumerate(child, start=1):
                rid = _rid(ext)
                part = wb_rels.get(rid, ("", "", ""))[1] if rid else ""
                facts.external_targets.append(_external_target(pkg, part, idx))

    for sheet_name, state, rid in sheet_entries:
        visibility = {"hidden": "hidden", "veryHidden": "very-hidden"}.get(state, "visible")
        rtype, target, _ = wb_rels.get(rid, ("", "", ""))
        if rtype == "worksheet" or (rtype in ("dialogsheet", "macrosheet") and target in pkg.names):
            if target not in pkg.names:
                raise WorkbookError("corrupt-workbook", f"{ident}: sheet part {target!r} missing")
            res = _parse_worksheet(pkg, target, sheet_name, styles, shared)
            facts.sheets.append(SheetFacts(sheet_name, visibility, res.hidden_rows, res.hidden_cols, res.protected))
            facts.cells.extend(res.cells)
            facts.formulas.extend(res.formulas)
        else:
            facts.sheets.append(SheetFacts(sheet_name, visibility))

    facts.doc_properties = _parse_properties(pkg, package_parts)
    return facts


def count_invisible_cells(facts: WorkbookFacts) -> int:
    """Non-empty cells whose font color equals their effective fill color."""
    return sum(
        1
        for c in facts.cells
        if c.value_kind != "empty"
        and c.font_color is not None
        and c.fill_color is not None
        and c.font_color == c.fill_color
    )


def hidden_census(facts: WorkbookFacts) -> tuple[int, int, int, int]:
    """(hidden sheets, very hidden sheets, hidden rows, hidden columns)."""
    return (
        sum(1 for s in facts.sheets if s.visibility == "hidden"),
        sum(1 for s in facts.sheets if s.visibility == "very-hidden"),
        sum(s.hidden_row_count for s in facts.sheets),
        sum(s.hidden_column_count for s in facts.sheets),
    )
