import csv
import io
import json
import logging
import os

import pytest

from conftest import make_entry, write_config
from sheetrisk import corpus
from sheetrisk.cli import main
from sheetrisk.config import config_from_dict, load_config
from sheetrisk.errors import ConfigError, ReportError
from sheetrisk.inventory import InventorySnapshot, diff, load_snapshot, new_scan_id
from sheetrisk.pipeline import INVENTORY_COLUMNS, EXIT_CLEAN, EXIT_VIOLATIONS, STAGES, render_reports, run_pipeline
from sheetrisk.risk import DEFAULT_MATRIX, RiskConfig


def setup_tree(tmp_path, files=None):
    share = tmp_path / "share"
    share.mkdir()
    for name, data in (files or {}).items():
        corpus.write(share / name, data)
    cfg = {"roots": [str(share)], "catalog_dir": str(tmp_path / "catalog"), "output_dir": str(tmp_path / "reports")}
    return share, config_from_dict(cfg, tmp_path)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def vignettes():
    return {
        "income.xlsx": corpus.materiality_vignette_bytes(),
        "model.xlsx": corpus.complexity_vignette_bytes(),
        "both.xlsx": corpus.combined_vignette_bytes(),
    }


# -- config ------------------------------------------------------------------

def test_minimal_config_gets_defaults(tmp_path):
    (tmp_path / "share").mkdir()
    cfg = load_config(write_config(tmp_path / "c.yaml", "roots: [share]\n"))
    assert cfg.risk == RiskConfig() and cfg.risk.matrix == DEFAULT_MATRIX
    assert cfg.roots[0].path == str(tmp_path / "share")
    assert cfg.catalog_dir == tmp_path / "catalog" and cfg.output_dir == tmp_path / "reports"
    assert cfg.report_formats == ("csv", "structured")


MATRIX_YAML = """
matrix:
  LOW: {BASIC: LOW, INTERMEDIATE: LOW, ADVANCED: MEDIUM}
  MODERATE: {BASIC: LOW, INTERMEDIATE: MEDIUM, ADVANCED: HIGH}
  CRITICAL: {BASIC: MEDIUM, INTERMEDIATE: HIGH, ADVANCED: HIGH}
"""


def test_full_matrix_accepted(tmp_path):
    (tmp_path / "share").mkdir()
    cfg = load_config(write_config(tmp_path / "c.yaml", "roots: [share]\n" + MATRIX_YAML))
    assert cfg.risk.matrix.lookup("CRITICAL", "INTERMEDIATE") == "HIGH"


def test_matrix_missing_cell(tmp_path):
    (tmp_path / "share").mkdir()
    text = "roots: [share]\n" + MATRIX_YAML.replace("BASIC: LOW, INTERMEDIATE: MEDIUM, ", "INTERMEDIATE: MEDIUM, ")
    with pytest.raises(ConfigError) as info:
        load_config(write_config(tmp_path / "c.yaml", text))
    assert info.value.code == "config-invalid" and "matrix.MODERATE.BASIC: missing cell" in info.value.messages


def test_non_monotone_matrix(tmp_path):
    (tmp_path / "share").mkdir()
    text = "roots: [share]\n" + MATRIX_YAML.replace("CRITICAL: {BASIC: MEDIUM", "CRITICAL: {BASIC: LOW")
    text = text.replace("MODERATE: {BASIC: LOW", "MODERATE: {BASIC: MEDIUM")
    with pytest.raises(ConfigError) as info:
        load_config(write_config(tmp_path / "c.yaml", text))
    assert info.value.code == "matrix-not-monotone"


def test_negative_points_names_rule(tmp_path):
    (tmp_path / "share").mkdir()
    text = "roots: [share]\nmateriality_rules:\n  - {id: bad-rule, kind: cell-text-contains, pattern: x, points: -5}\n"
    with pytest.raises(ConfigError) as info:
        load_config(write_config(tmp_path / "c.yaml", text))
    assert any("materiality_rules[0].points" in m and "bad-rule" in m for m in info.value.messages)


@pytest.mark.parametrize("text,fragment", [
    ("roots: []\n", "roots"),
    ("roots: [share]\nbogus: 1\n", "bogus: unknown key"),
    ("roots: [share]\nschema_version: 9\n", "schema_version"),
    ("roots: [share]\nreport_formats: [pdf]\n", "report_formats"),
    ("roots: [share]\noutput_dir: share/reports\n", "output_dir"),
    ("roots: [share]\nfilter: {modified_windows: [[2024-03-31, 2024-01-01]]}\n", "modified_windows[0]"),
])
def test_config_invalid_field_paths(tmp_path, text, fragment):
    (tmp_path / "share").mkdir()
    with pytest.raises(ConfigError) as info:
        load_config(write_config(tmp_path / "c.yaml", text))
    assert info.value.code == "config-invalid" and any(fragment in m for m in info.value.messages)


def test_custom_scale_labels_remap_default_matrix(tmp_path):
    (tmp_path / "share").mkdir()
    text = "roots: [share]\nscales:\n  materiality: {cuts: [40, 80], labels: [minor, notable, key]}\n"
    cfg = load_config(write_config(tmp_path / "c.yaml", text))
    assert cfg.risk.matrix.lookup("key", "INTERMEDIATE") == "HIGH"


# -- pipeline ----------------------------------------------------------------

def test_vignettes_end_to_end(tmp_path):
    _, cfg = setup_tree(tmp_path, vignettes())
    result = run_pipeline(cfg)
    rows = {os.path.basename(r["path"]): r for r in read_csv(cfg.output_dir / "inventory.csv")}
    assert (rows["income.xlsx"]["materiality_score"], rows["income.xlsx"]["materiality_band"]) == ("90", "CRITICAL")
    assert (rows["model.xlsx"]["complexity_score"], rows["model.xlsx"]["complexity_band"]) == ("95", "ADVANCED")
    assert rows["both.xlsx"]["risk"] == DEFAULT_MATRIX.lookup("CRITICAL", "ADVANCED") == "HIGH"
    # first scan: every HIGH workbook is new, so violations are present
    assert result.exit_code == EXIT_VIOLATIONS
    assert {os.path.basename(i) for i in result.diff.newly_high_risk} == {"both.xlsx"}


def test_empty_root(tmp_path):
    _, cfg = setup_tree(tmp_path)
    result = run_pipeline(cfg)
    assert result.exit_code == EXIT_CLEAN and result.snapshot.entries == []
    summary = result.bundle.summary
    assert summary["record_count"] == 0 and summary["error_total"] == 0
    assert set(summary["risk_counts"].values()) == {0} and set(summary["kind_counts"].values()) == {0}
    assert (cfg.output_dir / "inventory.csv").read_text().splitlines() == [",".join(INVENTORY_COLUMNS)]


def test_second_run_clean_and_byte_identical(tmp_path):
    _, cfg = setup_tree(tmp_path, vignettes())
    run_pipeline(cfg)
    first = {n: (cfg.output_dir / n).read_bytes() for n in ("inventory.csv", "high_risk.csv", "edges.tsv")}
    result = run_pipeline(cfg)
    assert result.exit_code == EXIT_CLEAN and not result.diff.has_changes and result.diff.newly_high_risk == []
    assert {n: (cfg.output_dir / n).read_bytes() for n in first} == first
    assert read_csv(cfg.output_dir / "violations.csv") == []


def test_stage_order_logged(tmp_path, caplog):
    _, cfg = setup_tree(tmp_path, {"a.xlsx": corpus.simple_workbook_bytes()})
    with caplog.at_level(logging.INFO, logger="sheetrisk"):
        run_pipeline(cfg)
    stages = [m.split()[2].rstrip(":") for m in caplog.messages if m.startswith("stage ")]
    assert stages == list(STAGES)


def test_record_errors_are_data(tmp_path):
    _, cfg = setup_tree(tmp_path, {"old.xls": corpus.legacy_xls_bytes(), "broken.xlsx": b"PK\x03\x04junk",
                                   "locked.xlsx": corpus.encrypted_bytes(corpus.simple_workbook_bytes())})
    result = run_pipeline(cfg)
    status = {os.path.basename(e.record.path): e.status for e in result.snapshot.entries}
    assert status == {"old.xls": "unsupported-format", "locked.xlsx": "encrypted"}
    assert result.exit_code == EXIT_CLEAN
    assert result.bundle.summary["error_counts"] == {"corrupt-archive": 1, "unsupported-format": 1}


def test_propagation_through_pipeline(tmp_path):
    share = tmp_path / "share"
    files = corpus.build_link_tree(share, "chain")
    cfg = config_from_dict({"roots": [str(share)], "catalog_dir": str(tmp_path / "cat"),
                            "output_dir": str(tmp_path / "out")}, tmp_path)
    result = run_pipeline(cfg)
    by = result.snapshot.by_identity
    assert by[str(files["A"])].assessment.materiality_band == "CRITICAL"
    for k in "BC":
        assert by[str(files[k])].assessment.inherited_critical
    edges = (cfg.output_dir / "edges.tsv").read_text().splitlines()
    assert f"{files['B']}\t{files['A']}\tresolved" in edges and f"{files['C']}\t{files['B']}\tresolved" in edges


def test_incremental_run_carries_forward(tmp_path):
    share, cfg = setup_tree(tmp_path, vignettes())
    first = run_pipeline(cfg)
    result = run_pipeline(cfg, since_last_scan=True)
    assert [e.identity for e in result.snapshot.entries] == [e.identity for e in first.snapshot.entries]
    assert not result.diff.has_changes and result.exit_code == EXIT_CLEAN
    (share / "model.xlsx").unlink()
    result = run_pipeline(cfg, since_last_scan=True)
    assert [os.path.basename(d) for d in result.diff.deleted] == ["model.xlsx"]


# -- render_reports ----------------------------------------------------------

def snap(entries):
    from datetime import datetime, timezone

    now = datetime(2024, 4, 1, tzinfo=timezone.utc)
    return InventorySnapshot(new_scan_id(now), now, now, list(entries))


def test_high_risk_rows(tmp_path):
    s = snap([make_entry("/d/1.xlsx", risk_band=("CRITICAL", "ADVANCED")), make_entry("/d/2.xlsx"),
              make_entry("/d/3.xlsx", risk_band=("MODERATE", "ADVANCED"))])
    render_reports(s, None, ["csv"], tmp_path)
    assert [r["path"] for r in read_csv(tmp_path / "high_risk.csv")] == ["/d/1.xlsx", "/d/3.xlsx"]
    assert len(read_csv(tmp_path / "inventory.csv")) == 3


def test_empty_snapshot_header_only(tmp_path):
    bundle = render_reports(snap([]), None, ["csv", "structured"], tmp_path)
    for name in ("inventory.csv", "high_risk.csv", "violations.csv"):
        assert (tmp_path / name).read_text().splitlines() == [",".join(INVENTORY_COLUMNS)]
    assert (tmp_path / "inventory.jsonl").read_text() == ""
    assert {p.name for p in bundle.paths} >= {"summary.csv", "summary.json", "edges.tsv"}


def test_sort_order_and_tie_break(tmp_path):
    s = snap([make_entry("/d/z.xlsx", risk_band=("CRITICAL", "ADVANCED"), score=90),
              make_entry("/d/a.xlsx", risk_band=("CRITICAL", "ADVANCED"), score=90),
              make_entry("/d/m.xlsx", risk_band=("CRITICAL", "ADVANCED"), score=120),
              make_entry("/d/0.xlsx")])
    render_reports(s, None, ["csv"], tmp_path)
    assert [r["path"] for r in read_csv(tmp_path / "inventory.csv")] == ["/d/m.xlsx", "/d/a.xlsx", "/d/z.xlsx", "/d/0.xlsx"]


def test_summary_counts_sum_to_total(tmp_path):
    entries = [make_entry(f"/d/{i}.xlsx", risk_band=(m, c), content_hash="same" if i < 2 else str(i))
               for i, (m, c) in enumerate([("LOW", "BASIC"), ("CRITICAL", "ADVANCED"), ("MODERATE", "INTERMEDIATE")])]
    bundle = render_reports(snap(entries), None, ["structured"], tmp_path)
    s = bundle.summary
    assert sum(s["risk_counts"].values()) == sum(s["kind_counts"].values()) == s["record_count"] == 3
    assert s["duplicate_hash_groups"] == [["/d/0.xlsx", "/d/1.xlsx"]]
    assert {r["identity"] for r in bundle.high_risk} <= {r["identity"] for r in bundle.inventory}


def test_violations_report(tmp_path):
    prev = snap([make_entry("/d/a.xlsx")])
    cur = snap([make_entry("/d/a.xlsx"), make_entry("/d/b.xlsx", risk_band=("CRITICAL", "INTERMEDIATE"))])
    render_reports(cur, diff(prev, cur), ["csv", "structured"], tmp_path)
    assert [r["path"] for r in read_csv(tmp_path / "violations.csv")] == ["/d/b.xlsx"]
    assert json.loads((tmp_path / "diff.json").read_text())["newly_high_risk"] == ["/d/b.xlsx"]


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ReportError) as info:
        render_reports(snap([]), None, ["csv"], blocker / "out")
    assert info.value.code == "report-write-failed"


# -- CLI ---------------------------------------------------------------------

@pytest.fixture
def cli_tree(tmp_path):
    share = tmp_path / "share"
    share.mkdir()
    for name, data in vignettes().items():
        corpus.write(share / name, data)
    return tmp_path, write_config(tmp_path / "sheetrisk.yaml", "roots: [share]\n")


def test_cli_scan(cli_tree, capsys):
    _, cfg = cli_tree
    assert main(["--config", str(cfg), "scan"]) == 0
    lines = [json.loads(x) for x in capsys.readouterr().out.splitlines()]
    assert sorted(os.path.basename(x["path"]) for x in lines) == ["both.xlsx", "income.xlsx", "model.xlsx"]


def test_cli_assess_then_rescan(cli_tree, capsys):
    root, cfg = cli_tree
    assert main(["assess", "--config", str(cfg)]) == EXIT_VIOLATIONS
    out = json.loads(capsys.readouterr().out)
    assert out["record_count"] == 3 and len(out["violations"]) == 1
    assert main(["assess", "--config", str(cfg), "--since-last-scan"]) == EXIT_CLEAN
    assert (root / "reports" / "inventory.csv").exists()


def test_cli_format_and_out_dir(cli_tree, capsys):
    root, cfg = cli_tree
    assert main(["assess", "--config", str(cfg), "--format", "structured", "--out-dir", str(root / "alt")]) == 2
    names = {p.name for p in (root / "alt").iterdir()}
    assert "inventory.jsonl" in names and "inventory.csv" not in names


def test_cli_report_diff_graph(cli_tree, capsys):
    root, cfg = cli_tree
    main(["assess", "--config", str(cfg)])
    first = json.loads(capsys.readouterr().out)["snapshot"]
    main(["assess", "--config", str(cfg)])
    second = json.loads(capsys.readouterr().out)["snapshot"]
    assert main(["diff", first, second]) == EXIT_CLEAN
    assert json.loads(capsys.readouterr().out)["new"] == []
    assert main(["report", second, "--out-dir", str(root / "again"), "--format", "csv"]) == EXIT_CLEAN
    assert (root / "again" / "inventory.csv").read_bytes() == (root / "reports" / "inventory.csv").read_bytes()
    capsys.readouterr()
    assert main(["graph", "--config", str(cfg)]) == EXIT_CLEAN
    assert capsys.readouterr().out.splitlines() == ["feeder\tdependent\tfeeder_status"]
    assert load_snapshot(second).scan_id in second


def test_cli_error_is_json(tmp_path, capsys):
    bad = write_config(tmp_path / "bad.yaml", "roots: []\n")
    assert main(["--config", str(bad), "assess"]) == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "config-invalid" and err["messages"]


def test_cli_corrupt_snapshot(tmp_path, capsys):
    path = tmp_path / "scan-x.jsonl"
    path.write_text('{"type": "header"\n')
    assert main(["diff", str(path), str(path)]) == 1
    assert json.loads(io.StringIO(capsys.readouterr().err).read().strip())["error"] == "catalog-corrupt"
