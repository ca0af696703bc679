"""Time the full pipeline over a synthetic tree of small workbooks and decoys.

    python3 scripts/bench_pipeline.py --workbooks 1000 --decoys 9000
"""

import argparse
import logging
import os
import tempfile
import time
from pathlib import Path

from sheetrisk import corpus
from sheetrisk.config import config_from_dict
from sheetrisk.pipeline import run_pipeline


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--workbooks", type=int, default=1000)
    parser.add_argument("--decoys", type=int, default=9000)
    parser.add_argument("--workers", type=int, default=os.cpu_count() or 4)
    parser.add_argument("--keep", type=Path, help="build the tree here instead of a temp dir")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    with tempfile.TemporaryDirectory() as tmp:
        base = args.keep or Path(tmp)
        t0 = time.perf_counter()
        total = corpus.build_perf_tree(base / "tree", args.workbooks, args.decoys)
        built = time.perf_counter() - t0
        cfg = config_from_dict({"roots": [str(base / "tree")], "catalog_dir": str(base / "catalog"),
                                "output_dir": str(base / "reports"), "workers": args.workers}, base)
        timings = []
        for label in ("cold", "rescan"):
            t0 = time.perf_counter()
            result = run_pipeline(cfg)
            timings.append((label, time.perf_counter() - t0, result))
    print(f"tree: {total} files built in {built:.1f}s, workers={args.workers}")
    for label, elapsed, result in timings:
        print(f"{label:7s} {elapsed:6.2f}s  records={len(result.snapshot.entries)} "
              f"errors={len(result.snapshot.errors)} exit={result.exit_code} "
              f"({total / elapsed:,.0f} files/s)")


if __name__ == "__main__":
    main()
