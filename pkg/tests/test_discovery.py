import io
import os
import zipfile
from datetime import date, datetime, timedelta, timezone

import pytest

from sheetrisk import corpus
from sheetrisk.discovery import (
    ArchiveLimits,
    FileKind,
    FileRecord,
    ScanFilter,
    ScanRoot,
    discover,
    expand_archive,
    extension_mismatch,
    read_record_bytes,
    sniff_kind,
    walk,
)
from sheetrisk.errors import DiscoveryError
from conftest import tree_fingerprint


def _rec(path, kind=FileKind.ZIP):
    st = os.stat(path)
    return FileRecord(str(path), (), st.st_size, datetime.fromtimestamp(st.st_mtime, timezone.utc),
                      None, "", kind, path.suffix.lstrip("."), False)


# -- sniffing ------------------------------------------------------------------

def test_renamed_workbook_sniffs_as_ooxml(tmp_path, xlsx_bytes):
    p = corpus.write(tmp_path / "notes.dat", xlsx_bytes)
    assert sniff_kind(p) is FileKind.OOXML
    (rec,) = discover([ScanRoot(str(tmp_path))]).records
    assert rec.extension == "dat" and rec.extension_mismatch


def test_plain_text_is_other():
    assert sniff_kind(b"hello") is FileKind.OTHER
    assert sniff_kind(b"") is FileKind.OTHER


def test_text_only_zip_is_archive():
    assert sniff_kind(corpus.zip_bytes({"a.txt": b"a", "b.txt": b"b"})) is FileKind.ZIP


def test_macro_encrypted_and_legacy_kinds(xlsx_bytes):
    macro = corpus.build_xlsx([corpus.RawSheet("S")], macro=True)
    assert sniff_kind(macro) is FileKind.OOXML_MACRO
    assert sniff_kind(corpus.encrypted_bytes(xlsx_bytes)) is FileKind.ENCRYPTED
    assert sniff_kind(corpus.legacy_xls_bytes()) is FileKind.LEGACY


def test_truncated_zip_and_ole_are_other(xlsx_bytes):
    assert sniff_kind(xlsx_bytes[:40]) is FileKind.OTHER
    assert sniff_kind(b"\xd0\xcf\x11\xe0\xa1\xb1\x1a\xe1" + b"\x00" * 100) is FileKind.OTHER


def test_sniffing_is_pure(xlsx_bytes):
    assert sniff_kind(xlsx_bytes) is sniff_kind(io.BytesIO(xlsx_bytes))


@pytest.mark.parametrize("kind,ext,expected", [
    (FileKind.OOXML, "xlsx", False),
    (FileKind.OOXML, "dat", True),
    (FileKind.OOXML, "", True),
    (FileKind.LEGACY, "xls", False),
    (FileKind.ZIP, "xlsx", True),
    (FileKind.ZIP, "zip", False),
    (FileKind.OTHER, "txt", False),
])
def test_extension_mismatch(kind, ext, expected):
    assert extension_mismatch(kind, ext) is expected


# -- walking -----------------------------------------------------------------

def test_walk_three_workbooks_and_decoy(tmp_path, xlsx_bytes):
    corpus.write(tmp_path / "a.xlsx", xlsx_bytes)
    corpus.write(tmp_path / "sub" / "b.xlsx", corpus.simple_workbook_bytes("b"))
    corpus.write(tmp_path / "renamed.bak", corpus.simple_workbook_bytes("c"))
    corpus.write(tmp_path / "decoy.txt", b"not a workbook")
    recs = list(walk(ScanRoot(str(tmp_path))))
    assert sorted(os.path.basename(r.path) for r in recs) == ["a.xlsx", "b.xlsx", "renamed.bak"]


def test_walk_name_pattern(tmp_path, xlsx_bytes):
    corpus.write(tmp_path / "revenue recognition.xlsx", xlsx_bytes)
    corpus.write(tmp_path / "other.xlsx", xlsx_bytes)
    recs = list(walk(ScanRoot(str(tmp_path)), ScanFilter(name_patterns=("*revenue*",))))
    assert [os.path.basename(r.path) for r in recs] == ["revenue recognition.xlsx"]
    # substring patterns and case folding
    recs = list(walk(ScanRoot(str(tmp_path)), ScanFilter(name_patterns=("REVENUE",))))
    assert len(recs) == 1


def test_walk_empty_directory(tmp_path):
    assert list(walk(ScanRoot(str(tmp_path)))) == []


def test_walk_is_lexicographic(tmp_path, xlsx_bytes):
    for name in ("b.xlsx", "a.xlsx", "c/z.xlsx", "B.xlsx"):
        corpus.write(tmp_path / name, xlsx_bytes)
    paths = [r.path for r in walk(ScanRoot(str(tmp_path)), workers=4)]
    assert paths == sorted(paths)


def test_filters_or_together(tmp_path, xlsx_bytes):
    old = corpus.write(tmp_path / "old.xlsx", xlsx_bytes)
    corpus.write(tmp_path / "2Q_2008_earnings.xlsx", xlsx_bytes)
    recent = corpus.write(tmp_path / "recent.xlsx", xlsx_bytes)
    past = datetime(2020, 3, 31, 12, tzinfo=timezone.utc).timestamp()
    os.utime(old, (past, past))
    now = datetime.now(timezone.utc)
    os.utime(recent, (now.timestamp(), now.timestamp()))
    f = ScanFilter(name_patterns=("*earnings*",), modified_windows=((date(2020, 3, 25), date(2020, 4, 5)),))
    names = sorted(os.path.basename(r.path) for r in walk(ScanRoot(str(tmp_path)), f))
    assert names == ["2Q_2008_earnings.xlsx", "old.xlsx"]
    # since-last-scan admits anything newer than the last scan on top of the other criteria
    f = ScanFilter(name_patterns=("*earnings*",), since_last_scan=True)
    names = sorted(os.path.basename(r.path) for r in walk(ScanRoot(str(tmp_path)), f, now - timedelta(days=1)))
    assert names == ["2Q_2008_earnings.xlsx", "recent.xlsx"]


def test_window_validation():
    with pytest.raises(ValueError):
        ScanFilter(modified_windows=((date(2020, 2, 1), date(2020, 1, 1)),))


def test_max_file_size_reported(tmp_path, xlsx_bytes):
    corpus.write(tmp_path / "big.xlsx", xlsx_bytes)
    errors = []
    assert list(walk(ScanRoot(str(tmp_path)), ScanFilter(max_file_size_bytes=10), errors=errors)) == []
    assert [e.code for e in errors] == ["file-too-large"]


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_unreadable_subdirectory_is_recorded(tmp_path, xlsx_bytes):
    corpus.write(tmp_path / "ok.xlsx", xlsx_bytes)
    locked = tmp_path / "locked"
    corpus.write(locked / "x.xlsx", xlsx_bytes)
    locked.chmod(0)
    try:
        errors = []
        recs = list(walk(ScanRoot(str(tmp_path)), errors=errors))
        assert len(recs) == 1 and errors and errors[0].code == "access-denied"
    finally:
        locked.chmod(0o755)


def test_symlink_handling(tmp_path, xlsx_bytes):
    target = tmp_path / "real"
    corpus.write(target / "a.xlsx", xlsx_bytes)
    os.symlink(target, tmp_path / "link")
    paths = [r.path for r in walk(ScanRoot(str(tmp_path)))]
    assert paths == [str(target / "a.xlsx")]
    # following links still visits each real directory once (loop safety)
    os.symlink(tmp_path, target / "loop")
    paths = [r.path for r in walk(ScanRoot(str(tmp_path)), ScanFilter(follow_symlinks=True))]
    assert paths == [str(tmp_path / "link" / "a.xlsx")]


# -- archives ----------------------------------------------------------------

def test_zip_with_one_workbook(tmp_path, xlsx_bytes):
    z = corpus.write(tmp_path / "a.zip", corpus.zip_bytes({"in/book.xlsx": xlsx_bytes}))
    (rec,) = expand_archive(_rec(z))
    assert rec.container_chain == ("in/book.xlsx",)
    assert read_record_bytes(rec) == xlsx_bytes


def test_nested_zip_depth_two(tmp_path, xlsx_bytes):
    inner = corpus.zip_bytes({"book.xlsx": xlsx_bytes})
    z = corpus.write(tmp_path / "outer.zip", corpus.zip_bytes({"inner.zip": inner}))
    (rec,) = expand_archive(_rec(z), limits=ArchiveLimits(max_depth=3))
    assert rec.container_chain == ("inner.zip", "book.xlsx")


def test_zip_without_spreadsheets(tmp_path):
    z = corpus.write(tmp_path / "t.zip", corpus.zip_bytes({"a.txt": b"x"}))
    assert expand_archive(_rec(z)) == []


def test_spreadsheet_input_is_terminal(tmp_path, xlsx_bytes):
    p = corpus.write(tmp_path / "a.xlsx", xlsx_bytes)
    assert expand_archive(_rec(p, FileKind.OOXML)) == []


def test_depth_cap(tmp_path, xlsx_bytes):
    data = corpus.zip_bytes({"book.xlsx": xlsx_bytes})
    for i in range(4):
        data = corpus.zip_bytes({f"level{i}.zip": data})
    z = corpus.write(tmp_path / "deep.zip", data)
    errors = []
    assert expand_archive(_rec(z), errors=errors, limits=ArchiveLimits(max_depth=3)) == []
    assert any(e.code == "archive-depth-exceeded" for e in errors)
    recs = expand_archive(_rec(z), limits=ArchiveLimits(max_depth=6))
    assert len(recs) == 1 and len(recs[0].container_chain) == 5


def test_budget_exceeded_keeps_partial(tmp_path, xlsx_bytes):
    members = {f"b{i}.xlsx": corpus.simple_workbook_bytes(str(i)) for i in range(4)}
    z = corpus.write(tmp_path / "many.zip", corpus.zip_bytes(members))
    budget = len(members["b0.xlsx"]) * 2 + 10
    errors = []
    recs = expand_archive(_rec(z), errors=errors, limits=ArchiveLimits(max_decompressed_bytes=budget))
    assert 1 <= len(recs) < 4
    assert any(e.code == "archive-budget-exceeded" for e in errors)


def test_zip_bomb_ratio_is_bounded(tmp_path):
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("zeros.bin", b"\x00" * (20 * 1024 * 1024))
    z = corpus.write(tmp_path / "bomb.zip", buf.getvalue())
    errors = []
    assert expand_archive(_rec(z), errors=errors, limits=ArchiveLimits(max_decompressed_bytes=1024 * 1024)) == []
    assert any(e.code == "archive-budget-exceeded" for e in errors)


def test_corrupt_archive(tmp_path, xlsx_bytes):
    good = corpus.zip_bytes({"book.xlsx": xlsx_bytes})
    z = corpus.write(tmp_path / "bad.zip", good[:30] + b"\x00" * 50 + good[80:])
    errors = []
    expand_archive(_rec(z), errors=errors)
    assert errors and errors[0].code in ("corrupt-archive", "archive-budget-exceeded")


# -- discover ------------------------------------------------------------------

def test_two_roots_same_workbook(tmp_path, xlsx_bytes):
    corpus.write(tmp_path / "r1" / "a.xlsx", xlsx_bytes)
    corpus.write(tmp_path / "r2" / "a.xlsx", xlsx_bytes)
    recs, errors = discover([ScanRoot(str(tmp_path / "r1")), ScanRoot(str(tmp_path / "r2"))])
    assert len(recs) == 2 and recs[0].content_hash == recs[1].content_hash and not errors


def test_overlapping_roots_dedupe(tmp_path, xlsx_bytes):
    corpus.write(tmp_path / "sub" / "a.xlsx", xlsx_bytes)
    recs, _ = discover([ScanRoot(str(tmp_path)), ScanRoot(str(tmp_path / "sub"))])
    assert len(recs) == 1


def test_renamed_zipped_and_extensionless(tmp_path, xlsx_bytes):
    corpus.write(tmp_path / "x.dat", xlsx_bytes)
    corpus.write(tmp_path / "z.zip", corpus.zip_bytes({"q.xlsx": corpus.simple_workbook_bytes("q")}))
    corpus.write(tmp_path / "noext", corpus.simple_workbook_bytes("n"))
    recs, _ = discover([ScanRoot(str(tmp_path))])
    assert len(recs) == 3
    assert all(r.kind.is_spreadsheet and len(r.content_hash) == 64 for r in recs)


def test_all_roots_unreadable(tmp_path):
    with pytest.raises(DiscoveryError) as info:
        discover([ScanRoot(str(tmp_path / "missing"))])
    assert info.value.code == "no-roots-scanned"


def test_one_bad_root_is_reported(tmp_path, xlsx_bytes):
    corpus.write(tmp_path / "ok" / "a.xlsx", xlsx_bytes)
    recs, errors = discover([ScanRoot(str(tmp_path / "ok")), ScanRoot(str(tmp_path / "missing"))])
    assert len(recs) == 1 and [e.code for e in errors] == ["root-unreadable"]


def test_planted_corpus_recall(planted):
    recs, _ = discover([ScanRoot(str(planted.root))])
    assert [r.identity for r in recs] == planted.spreadsheets
    assert not any(r.kind is FileKind.OTHER for r in recs)


def test_discover_is_deterministic_and_read_only(planted):
    before = tree_fingerprint(planted.root)
    first = discover([ScanRoot(str(planted.root))], workers=8).records
    second = discover([ScanRoot(str(planted.root))], workers=1).records
    assert first == second
    assert tree_fingerprint(planted.root) == before


def test_record_round_trip(planted):
    for rec in discover([ScanRoot(str(planted.root))]).records:
        assert FileRecord.from_dict(rec.to_dict()) == rec
