"""Build a demo share with planted workbooks, decoys, link trees and the
two worked-example workbooks, plus a config file that scans it.

    python3 scripts/build_demo_corpus.py /tmp/demo
    sheetrisk --config /tmp/demo/sheetrisk.yaml assess -v
"""

import argparse
from pathlib import Path

from sheetrisk import corpus


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("target", type=Path)
    args = parser.parse_args()

    share = args.target / "share"
    planted = corpus.build_planted_corpus(share)
    corpus.write(share / "close" / "income_statement.xlsx", corpus.materiality_vignette_bytes())
    corpus.write(share / "models" / "allocation_model.xlsx", corpus.complexity_vignette_bytes())
    corpus.write(share / "close" / "combined.xlsx", corpus.combined_vignette_bytes())
    corpus.build_link_tree(share / "feeds" / "chain", "chain")
    corpus.build_link_tree(share / "feeds" / "cycle", "cycle")

    cfg = args.target / "sheetrisk.yaml"
    cfg.write_text(
        "schema_version: 1\n"
        "roots:\n  - {path: share, label: demo}\n"
        "catalog_dir: catalog\n"
        "output_dir: reports\n",
        encoding="utf-8",
    )
    print(f"wrote {len(planted.spreadsheets)} planted workbooks and {len(planted.decoys)} decoys under {share}")
    print(f"config: {cfg}")


if __name__ == "__main__":
    main()
