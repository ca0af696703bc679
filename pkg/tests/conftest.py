import hashlib
import os
from pathlib import Path

import pytest

from sheetrisk import corpus


def tree_fingerprint(root) -> dict[str, tuple[str, int]]:
    """path -> (sha256, mtime_ns) for every file under ``root``."""
    out = {}
    for dirpath, _, files in os.walk(root):
        for name in files:
            p = os.path.join(dirpath, name)
            with open(p, "rb") as fh:
                digest = hashlib.sha256(fh.read()).hexdigest()
            out[p] = (digest, os.stat(p).st_mtime_ns)
    return out


@pytest.fixture(scope="session")
def xlsx_bytes() -> bytes:
    return corpus.simple_workbook_bytes("hello", 1)


@pytest.fixture
def planted(tmp_path) -> corpus.PlantedCorpus:
    return corpus.build_planted_corpus(tmp_path / "share")


def write_config(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


def make_entry(path, *, chain=(), risk_band=("LOW", "BASIC"), content_hash="h0", kind=None, status="ok",
               score=0, profile=None):
    """Hand-built inventory entry; risk follows the default matrix."""
    from datetime import datetime, timezone

    from sheetrisk.discovery import FileKind, FileRecord
    from sheetrisk.inventory import InventoryEntry
    from sheetrisk.risk import DEFAULT_MATRIX, MetricsProfile, RiskAssessment

    mat, cx = risk_band
    rec = FileRecord(path, tuple(chain), 100, datetime(2024, 3, 31, 12, 0, tzinfo=timezone.utc), None,
                     content_hash, kind or FileKind.OOXML, path.rsplit(".", 1)[-1], False)
    a = RiskAssessment(score, 0, (), (), mat, cx, DEFAULT_MATRIX.lookup(mat, cx))
    return InventoryEntry(rec, profile or MetricsProfile(worksheet_count=1), a, (), status)
