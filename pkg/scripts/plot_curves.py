"""Plot mean F1 per round for each algorithm in a benchmark cell.

    python3 scripts/plot_curves.py runs/pr_feature/pr/feature-income -o curves.png

Needs matplotlib (``pip install .[plot]``).
"""

import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from fedunlearn.fedsim import RoundHistory  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("cell_dir", type=Path)
    ap.add_argument("-o", "--output", type=Path, default=Path("curves.png"))
    ap.add_argument("--metric", choices=("f1", "tpr", "ppv"), default="f1")
    args = ap.parse_args()

    means = sorted(args.cell_dir.glob("curves/*/mean.csv"))
    if not means:
        raise SystemExit(f"no mean curves under {args.cell_dir}/curves")
    fig, ax = plt.subplots(figsize=(6, 4))
    for path in means:
        h = RoundHistory.from_csv(path.read_text())
        ys = [getattr(r.fidelity, args.metric) for r in h.records]
        ax.plot(range(1, len(ys) + 1), ys, label=path.parent.name)
    ax.set_xlabel("global round")
    ax.set_ylabel(args.metric.upper())
    ax.set_title(args.cell_dir.name)
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.output, dpi=150)
    print(f"wrote {args.output}")


if __name__ == "__main__":
    main()
