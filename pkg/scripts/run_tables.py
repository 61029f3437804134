"""Run the benchmark configs one after another and print where reports landed.

    python3 scripts/run_tables.py                # all three matrices
    python3 scripts/run_tables.py rates_pr --dataset-dir ~/tabular
"""

import argparse
import logging
from pathlib import Path

from fedunlearn import runner as R

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
TABLES = ("feature_all", "rows_all", "rates_pr")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("tables", nargs="*", default=list(TABLES), help="config names under configs/")
    ap.add_argument("--dataset-dir", default=None)
    ap.add_argument("--out-root", default=None, help="prefix for every config's output_dir")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    for name in args.tables:
        cfg = R.parse_config(CONFIGS / f"{name}.yaml")
        out = Path(args.out_root) / cfg.output_dir if args.out_root else Path(cfg.output_dir)
        R.run_benchmark(cfg, args.dataset_dir, out)
        for md in sorted(out.glob("report_*.md")):
            print(f"\n## {name}: {md.stem[len('report_'):]}\n")
            print(md.read_text())


if __name__ == "__main__":
    main()
