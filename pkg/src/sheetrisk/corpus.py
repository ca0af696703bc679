"""Synthetic workbooks and file trees for tests, demos and benchmarks.

Two writers are used on purpose: openpyxl/xlwt/msoffcrypto (the ``corpus``
extra) give fixtures written by code independent of this package, and the
small raw-XML writer below covers what openpyxl cannot emit (zero-width
columns, zero-height rows, external-link parts, cached error values on
formulas, VBA parts).
"""

from __future__ import annotations

import io
import os
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence
from xml.sax.saxutils import escape, quoteattr

# -- raw OOXML writer ----------------------------------------------------------

_MAIN = "http://schemas.openxmlformats.org/spreadsheetml/2006/main"
_R = "http://schemas.openxmlformats.org/officeDocument/2006/relationships"
_PKG_R = "http://schemas.openxmlformats.org/package/2006/relationships"
_CT = "http://schemas.openxmlformats.org/package/2006/content-types"
_REL = "http://schemas.openxmlformats.org/officeDocument/2006/relationships/"
_CORE_PROPS = "http://schemas.openxmlformats.org/package/2006/relationships/metadata/core-properties"

XLSX_MAIN = "application/vnd.openxmlformats-officedocument.spreadsheetml.sheet.main+xml"
XLSM_MAIN = "application/vnd.ms-excel.sheet.macroEnabled.main+xml"


@dataclass
class RawCell:
    ref: str
    value: object = None  # str -> inline text, bool, int/float, None
    formula: Optional[str] = None
    style: int = 0
    error: bool = False  # value is an error literal such as "#DIV/0!"
    array: bool = False


@dataclass
class RawSheet:
    name: str
    cells: list[RawCell] = field(default_factory=list)
    state: str = "visible"  # visible | hidden | veryHidden
    protected: bool = False
    hidden_rows: Sequence[int] = ()
    zero_height_rows: Sequence[int] = ()
    hidden_cols: Sequence[int] = ()
    zero_width_cols: Sequence[int] = ()


@dataclass
class RawStyles:
    """fonts/fills are ARGB strings (None = automatic / no fill); xfs are
    (font index, fill index, numFmtId)."""

    fonts: list[Optional[str]] = field(default_factory=lambda: [None])
    fills: list[Optional[str]] = field(default_factory=lambda: [None, None])
    num_fmts: dict[int, str] = field(default_factory=dict)
    xfs: list[tuple[int, int, int]] = field(default_factory=lambda: [(0, 0, 0)])


def _cell_xml(c: RawCell) -> str:
    attrs = f' r="{c.ref}"' + (f' s="{c.style}"' if c.style else "")
    inner = ""
    if c.formula is not None:
        f_attrs = f' t="array" ref="{c.ref}"' if c.array else ""
        inner += f"<f{f_attrs}>{escape(c.formula)}</f>"
    v = c.value
    if c.error:
        return f'<c{attrs} t="e">{inner}<v>{escape(str(v))}</v></c>'
    if isinstance(v, bool):
        return f'<c{attrs} t="b">{inner}<v>{int(v)}</v></c>'
    if isinstance(v, (int, float)):
        return f"<c{attrs}>{inner}<v>{v}</v></c>"
    if isinstance(v, str):
        if c.formula is not None:
            return f'<c{attrs} t="str">{inner}<v>{escape(v)}</v></c>'
        return f'<c{attrs} t="inlineStr"><is><t>{escape(v)}</t></is></c>'
    return f"<c{attrs}>{inner}</c>"


def _row_of(ref: str) -> int:
    return int("".join(ch for ch in ref if ch.isdigit()))


def _sheet_xml(sheet: RawSheet) -> str:
    rows: dict[int, list[RawCell]] = {}
    for c in sheet.cells:
        rows.setdefault(_row_of(c.ref), []).append(c)
    for r in (*sheet.hidden_rows, *sheet.zero_height_rows):
        rows.setdefault(r, [])
    cols = "".join(
        f'<col min="{c}" max="{c}" width="9" hidden="1" customWidth="1"/>' for c in sheet.hidden_cols
    ) + "".join(f'<col min="{c}" max="{c}" width="0" customWidth="1"/>' for c in sheet.zero_width_cols)
    body = []
    for r in sorted(rows):
        attrs = ""
        if r in sheet.hidden_rows:
            attrs += ' hidden="1"'
        if r in sheet.zero_height_rows:
            attrs += ' ht="0" customHeight="1"'
        body.append(f'<row r="{r}"{attrs}>' + "".join(_cell_xml(c) for c in rows[r]) + "</row>")
    protection = '<sheetProtection sheet="1" objects="1" scenarios="1"/>' if sheet.protected else ""
    return (
        f'<?xml version="1.0" encoding="UTF-8" standalone="yes"?>\n<worksheet xmlns="{_MAIN}" xmlns:r="{_R}">'
        + (f"<cols>{cols}</cols>" if cols else "")
        + f"<sheetData>{''.join(body)}</sheetData>{protection}</worksheet>"
    )


def _color(argb: Optional[str]) -> str:
    return f'<color rgb="{argb}"/>' if argb else ""


def _styles_xml(st: RawStyles) -> str:
    fonts = "".join(f"<font><sz val=\"11\"/>{_color(c)}<name val=\"Calibri\"/></font>" for c in st.fonts)
    fills = []
    for i, argb in enumerate(st.fills):
        if i == 1 and argb is None:
            fills.append('<fill><patternFill patternType="gray125"/></fill>')
        elif argb is None:
            fills.append('<fill><patternFill patternType="none"/></fill>')
        else:
            fills.append(f'<fill><patternFill patternType="solid"><fgColor rgb="{argb}"/></patternFill></fill>')
    numfmts = "".join(f'<numFmt numFmtId="{k}" formatCode={quoteattr(v)}/>' for k, v in st.num_fmts.items())
    xfs = "".join(
        f'<xf numFmtId="{n}" fontId="{fo}" fillId="{fi}" borderId="0" xfId="0"'
        + (' applyNumberFormat="1"' if n else "") + (' applyFill="1"' if fi else "") + "/>"
        for fo, fi, n in st.xfs
    )
    return (
        f'<?xml version="1.0" encoding="UTF-8" standalone="yes"?>\n<styleSheet xmlns="{_MAIN}">'
        + (f'<numFmts count="{len(st.num_fmts)}">{numfmts}</numFmts>' if numfmts else "")
        + f'<fonts count="{len(st.fonts)}">{fonts}</fonts>'
        + f'<fills count="{len(st.fills)}">{"".join(fills)}</fills>'
        + '<borders count="1"><border/></borders>'
        + '<cellStyleXfs count="1"><xf numFmtId="0" fontId="0" fillId="0" borderId="0"/></cellStyleXfs>'
        + f'<cellXfs count="{len(st.xfs)}">{xfs}</cellXfs></styleSheet>'
    )


def _rels_xml(rels: Sequence[tuple[str, str, str, bool]]) -> str:
    body = "".join(
        f'<Relationship Id="{rid}" Type="{_REL}{rtype}" Target={quoteattr(target)}'
        + (' TargetMode="External"' if external else "") + "/>"
        for rid, rtype, target, external in rels
    )
    return f'<?xml version="1.0" encoding="UTF-8" standalone="yes"?>\n<Relationships xmlns="{_PKG_R}">{body}</Relationships>'


def build_xlsx(
    sheets: Sequence[RawSheet],
    *,
    styles: Optional[RawStyles] = None,
    external_targets: Sequence[str] = (),
    defined_names: dict[str, str] | None = None,
    workbook_protected: bool = False,
    macro: bool = False,
    custom_properties: dict[str, str] | None = None,
    title: str = "",
) -> bytes:
    """Serialize a minimal but well-formed OOXML workbook."""
    styles = styles or RawStyles()
    overrides = [("/xl/workbook.xml", XLSM_MAIN if macro else XLSX_MAIN),
                 ("/xl/styles.xml", "application/vnd.openxmlformats-officedocument.spreadsheetml.styles+xml"),
                 ("/docProps/core.xml", "application/vnd.openxmlformats-package.core-properties+xml")]
    parts: dict[str, str | bytes] = {}
    wb_rels = []
    sheet_xml = []
    for i, sh in enumerate(sheets, start=1):
        rid = f"rId{i}"
        wb_rels.append((rid, "worksheet", f"worksheets/sheet{i}.xml", False))
        state = f' state="{sh.state}"' if sh.state != "visible" else ""
        sheet_xml.append(f"<sheet name={quoteattr(sh.name)} sheetId=\"{i}\"{state} r:id=\"{rid}\"/>")
        parts[f"xl/worksheets/sheet{i}.xml"] = _sheet_xml(sh)
        overrides.append((f"/xl/worksheets/sheet{i}.xml",
                          "application/vnd.openxmlformats-officedocument.spreadsheetml.worksheet+xml"))
    n = len(sheets)
    wb_rels.append((f"rId{n + 1}", "styles", "styles.xml", False))
    parts["xl/styles.xml"] = _styles_xml(styles)
    ext_refs = []
    for j, target in enumerate(external_targets, start=1):
        rid = f"rId{n + 1 + j}"
        wb_rels.append((rid, "externalLink", f"externalLinks/externalLink{j}.xml", False))
        ext_refs.append(f'<externalReference r:id="{rid}"/>')
        parts[f"xl/externalLinks/externalLink{j}.xml"] = (
            f'<?xml version="1.0" encoding="UTF-8" standalone="yes"?>\n<externalLink xmlns="{_MAIN}" xmlns:r="{_R}">'
            '<externalBook r:id="rId1"><sheetNames><sheetName val="Sheet1"/></sheetNames></externalBook></externalLink>'
        )
        parts[f"xl/externalLinks/_rels/externalLink{j}.xml.rels"] = _rels_xml(
            [("rId1", "externalLinkPath", target, True)]
        )
        overrides.append((f"/xl/externalLinks/externalLink{j}.xml",
                          "application/vnd.openxmlformats-officedocument.spreadsheetml.externalLink+xml"))
    if macro:
        wb_rels.append((f"rId{n + len(external_targets) + 2}", "vbaProject", "vbaProject.bin", False))
        parts["xl/vbaProject.bin"] = b"\xd0\xcf\x11\xe0\xa1\xb1\x1a\xe1" + b"\x00" * 504
    names = "".join(
        f"<definedName name={quoteattr(k)}>{escape(v)}</definedName>" for k, v in (defined_names or {}).items()
    )
    protection = '<workbookProtection lockStructure="1"/>' if workbook_protected else ""
    parts["xl/workbook.xml"] = (
        f'<?xml version="1.0" encoding="UTF-8" standalone="yes"?>\n<workbook xmlns="{_MAIN}" xmlns:r="{_R}">'
        + protection + f"<sheets>{''.join(sheet_xml)}</sheets>"
        + (f"<externalReferences>{''.join(ext_refs)}</externalReferences>" if ext_refs else "")
        + (f"<definedNames>{names}</definedNames>" if names else "")
        + "</workbook>"
    )
    parts["xl/_rels/workbook.xml.rels"] = _rels_xml(wb_rels)
    pkg_rels = [("rId1", _REL + "officeDocument", "xl/workbook.xml"),
                ("rId2", _CORE_PROPS, "docProps/core.xml")]
    parts["docProps/core.xml"] = (
        '<?xml version="1.0" encoding="UTF-8" standalone="yes"?>\n'
        '<cp:coreProperties xmlns:cp="http://schemas.openxmlformats.org/package/2006/metadata/core-properties" '
        'xmlns:dc="http://purl.org/dc/elements/1.1/">'
        f"<dc:title>{escape(title)}</dc:title></cp:coreProperties>"
    )
    if custom_properties:
        props = "".join(
            '<property fmtid="{D5CDD505-2E9C-101B-9397-08002B2CF9AE}" '
            f'pid="{i}" name={quoteattr(k)}><vt:lpwstr>{escape(v)}</vt:lpwstr></property>'
            for i, (k, v) in enumerate(custom_properties.items(), start=2)
        )
        parts["docProps/custom.xml"] = (
            '<?xml version="1.0" encoding="UTF-8" standalone="yes"?>\n'
            '<Properties xmlns="http://schemas.openxmlformats.org/officeDocument/2006/custom-properties" '
            f'xmlns:vt="http://schemas.openxmlformats.org/officeDocument/2006/docPropsVTypes">{props}</Properties>'
        )
        pkg_rels.append(("rId3", _REL + "custom-properties", "docProps/custom.xml"))
        overrides.append(("/docProps/custom.xml", "application/vnd.openxmlformats-officedocument.custom-properties+xml"))
    rels_body = "".join(
        f'<Relationship Id="{rid}" Type="{rtype}" Target="{target}"/>'
        for rid, rtype, target in pkg_rels
    )
    parts["_rels/.rels"] = (
        f'<?xml version="1.0" encoding="UTF-8" standalone="yes"?>\n<Relationships xmlns="{_PKG_R}">{rels_body}</Relationships>'
    )
    defaults = '<Default Extension="rels" ContentType="application/vnd.openxmlformats-package.relationships+xml"/>' \
               '<Default Extension="xml" ContentType="application/xml"/>'
    if macro:
        defaults += '<Default Extension="bin" ContentType="application/vnd.ms-office.vbaProject"/>'
    ct = (
        f'<?xml version="1.0" encoding="UTF-8" standalone="yes"?>\n<Types xmlns="{_CT}">{defaults}'
        + "".join(f'<Override PartName="{p}" ContentType="{t}"/>' for p, t in overrides)
        + "</Types>"
    )
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("[Content_Types].xml", ct)
        for name, data in parts.items():
            zf.writestr(name, data)
    return buf.getvalue()


def zip_bytes(members: dict[str, bytes]) -> bytes:
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        for name, data in members.items():
            zf.writestr(name, data)
    return buf.getvalue()


def write(path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    return path


# -- independent writers (corpus extra) -----------------------------------------

def openpyxl_bytes(build) -> bytes:
    """Run ``build(workbook)`` on a fresh openpyxl workbook and serialize it."""
    import openpyxl

    wb = openpyxl.Workbook()
    build(wb)
    buf = io.BytesIO()
    wb.save(buf)
    return buf.getvalue()


def legacy_xls_bytes(text: str = "legacy") -> bytes:
    import xlwt

    book = xlwt.Workbook()
    sheet = book.add_sheet("Sheet1")
    sheet.write(0, 0, text)
    sheet.write(1, 0, 42)
    buf = io.BytesIO()
    book.save(buf)
    return buf.getvalue()


def encrypted_bytes(plain: bytes, password: str = "secret") -> bytes:
    from msoffcrypto.format.ooxml import OOXMLFile

    out = io.BytesIO()
    OOXMLFile(io.BytesIO(plain)).encrypt(password, out)
    return out.getvalue()


def simple_workbook_bytes(label: str = "data", value: float = 1) -> bytes:
    def build(wb):
        ws = wb.active
        ws["A1"] = label
        ws["B1"] = value

    return openpyxl_bytes(build)


# -- worked-example vignettes ------------------------------------------------

def materiality_vignette_bytes() -> bytes:
    """A cell reading "Income" and a currency-formatted 6,000,000."""

    def build(wb):
        ws = wb.active
        ws.title = "Summary"
        ws["A1"] = "Income"
        ws["B1"] = 6_000_000
        ws["B1"].number_format = '"$"#,##0.00'

    return openpyxl_bytes(build)


def complexity_vignette_bytes() -> bytes:
    """Two formulas evaluating to errors, one white-on-white cell, sheet
    protection on."""
    styles = RawStyles(fonts=[None, "FFFFFFFF"], fills=[None, None, "FFFFFFFF"], xfs=[(0, 0, 0), (1, 2, 0)])
    sheet = RawSheet("Model", [
        RawCell("A1", "#DIV/0!", formula="1/0", error=True),
        RawCell("A2", "#N/A", formula="NA()", error=True),
        RawCell("B1", 42, style=1),
    ], protected=True)
    return build_xlsx([sheet], styles=styles)


def complexity_vignette_openpyxl_bytes() -> bytes:
    """Same profile written by openpyxl, with literal error values."""
    from openpyxl.styles import Font, PatternFill

    def build(wb):
        ws = wb.active
        ws.title = "Model"
        ws["A1"] = "#DIV/0!"
        ws["A2"] = "#REF!"
        ws["B1"] = 42
        ws["B1"].font = Font(color="FFFFFFFF")
        ws["B1"].fill = PatternFill(fill_type="solid", fgColor="FFFFFFFF")
        ws.protection.sheet = True

    return openpyxl_bytes(build)


def combined_vignette_bytes() -> bytes:
    """Both worked-example profiles in one workbook, via the raw writer so the
    error cells carry real formulas."""
    styles = RawStyles(
        fonts=[None, "FFFFFFFF"],
        fills=[None, None, "FFFFFFFF"],
        num_fmts={164: '"$"#,##0.00'},
        xfs=[(0, 0, 0), (0, 0, 164), (1, 2, 0)],
    )
    sheet = RawSheet("Model", [
        RawCell("A1", "Income"),
        RawCell("B1", 6_000_000, style=1),
        RawCell("A2", "#DIV/0!", formula="1/0", error=True),
        RawCell("A3", "#REF!", formula="#REF!+1", error=True),
        RawCell("B2", 7, style=2),
    ], protected=True)
    return build_xlsx([sheet], styles=styles)


def linked_workbook_bytes(targets: Sequence[str], critical: bool = False, label: str = "") -> bytes:
    cells = [RawCell("A1", label or "feed")]
    if critical:
        styles = RawStyles(num_fmts={164: '"$"#,##0'}, xfs=[(0, 0, 0), (0, 0, 164)])
        cells += [RawCell("A2", "Income"), RawCell("B2", 6_000_000, style=1)]
    else:
        styles = RawStyles()
    for j, _ in enumerate(targets, start=1):
        cells.append(RawCell(f"C{j}", 1, formula=f"[{j}]Sheet1!A1"))
    return build_xlsx([RawSheet("Sheet1", cells)], styles=styles, external_targets=targets)


# -- fixture trees -----------------------------------------------------------

@dataclass
class PlantedCorpus:
    root: Path
    spreadsheets: list[str]  # expected FileRecord identities
    decoys: list[str]


def build_planted_corpus(root) -> PlantedCorpus:
    """A tree with planted spreadsheets in awkward places plus decoys."""
    root = Path(root)
    xlsx = simple_workbook_bytes("plain", 1)
    planted: list[str] = []
    decoys: list[str] = []

    def plant(rel: str, data: bytes) -> str:
        write(root / rel, data)
        planted.append(str((root / rel).absolute()))
        return planted[-1]

    def decoy(rel: str, data: bytes) -> None:
        write(root / rel, data)
        decoys.append(str((root / rel).absolute()))

    plant("plain.xlsx", xlsx)
    plant("finance/close/q1.xlsx", simple_workbook_bytes("q1", 2))
    plant("finance/close/Q2.XLSX", simple_workbook_bytes("q2", 3))
    plant("deep/a/b/c/model.xlsx", simple_workbook_bytes("deep", 4))
    plant("macros/book.xlsm", build_xlsx([RawSheet("S", [RawCell("A1", "m")])], macro=True))
    plant("renamed/backup.dat", simple_workbook_bytes("renamed", 5))
    plant("renamed/noextension", simple_workbook_bytes("noext", 6))
    plant("renamed/legacy_as.tmp", legacy_xls_bytes("renamed legacy"))
    plant("legacy/old.xls", legacy_xls_bytes())
    plant("secure/locked.xlsx", encrypted_bytes(simple_workbook_bytes("locked", 7)))
    plant("links/linked.xlsx", linked_workbook_bytes(["../plain.xlsx"]))
    plant("hidden/veryhidden.xlsx", build_xlsx([
        RawSheet("Visible", [RawCell("A1", 1)]),
        RawSheet("Secret", [RawCell("A1", 2)], state="veryHidden"),
    ]))
    plant("templates/report.xltx", simple_workbook_bytes("template", 8))

    inner = zip_bytes({"deep.xlsx": simple_workbook_bytes("nested2", 9), "readme.txt": b"inner"})
    write(root / "archives/outer.zip", zip_bytes({"level1/inner.zip": inner,
                                                   "top.xlsx": simple_workbook_bytes("nested1", 10)}))
    outer = str((root / "archives/outer.zip").absolute())
    planted.append(f"{outer}!level1/inner.zip!deep.xlsx")
    planted.append(f"{outer}!top.xlsx")

    decoy("notes.txt", b"quarterly notes\n")
    decoy("images/logo.png", b"\x89PNG\r\n\x1a\n" + b"\x00" * 64)
    decoy("docs/fake.xlsx", b"this is not a workbook")
    decoy("docs/empty.xlsx", b"")
    decoy("docs/letter.docx", zip_bytes({
        "[Content_Types].xml": b'<?xml version="1.0"?><Types xmlns="' + _CT.encode() + b'">'
        b'<Override PartName="/word/document.xml" ContentType="application/vnd.openxmlformats-'
        b'officedocument.wordprocessingml.document.main+xml"/></Types>',
        "word/document.xml": b"<w/>",
    }))
    decoy("archives/text_only.zip", zip_bytes({"a.txt": b"a", "b/c.csv": b"1,2\n"}))
    decoy("data/export.csv", b"a,b\n1,2\n")
    decoy("data/blob.bin", os.urandom(256))
    planted.sort()
    return PlantedCorpus(root, planted, sorted(decoys))


def build_link_tree(root, kind: str = "chain") -> dict[str, Path]:
    """``chain``: C feeds B feeds A, only A critical. ``cycle``: A and B feed
    each other, only A critical."""
    root = Path(root)
    if kind == "chain":
        files = {
            "A": write(root / "A.xlsx", linked_workbook_bytes(["B.xlsx"], critical=True, label="A")),
            "B": write(root / "B.xlsx", linked_workbook_bytes(["C.xlsx"], label="B")),
            "C": write(root / "C.xlsx", linked_workbook_bytes([], label="C")),
        }
    elif kind == "cycle":
        files = {
            "A": write(root / "A.xlsx", linked_workbook_bytes(["B.xlsx"], critical=True, label="A")),
            "B": write(root / "B.xlsx", linked_workbook_bytes(["A.xlsx"], label="B")),
        }
    else:
        raise ValueError(f"unknown link tree {kind!r}")
    return files


def build_perf_tree(root, workbooks: int = 1000, decoys: int = 9000, per_dir: int = 200) -> int:
    """Synthetic tree for the throughput benchmark. Returns files written."""
    root = Path(root)
    total = workbooks + decoys
    for i in range(total):
        d = root / f"d{i // per_dir:03d}"
        if i % per_dir == 0:
            d.mkdir(parents=True, exist_ok=True)
        if i < workbooks:
            data = build_xlsx([RawSheet("Sheet1", [
                RawCell("A1", "Income"), RawCell("B1", i),
                RawCell("C1", 1, formula="IF(B1>0,1,IF(B1<0,-1,0))"),
            ])])
            (d / f"book{i:05d}.xlsx").write_bytes(data)
        else:
            (d / f"note{i:05d}.txt").write_bytes(b"decoy %d\n" % i)
    return total

