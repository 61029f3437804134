"""Write the synthetic private-bank table to CSV for inspection or reuse.

The benchmark regenerates it in memory from ``data.synth_seed``; this script
only exists so the rows can be looked at with other tools.
"""

import argparse

from fedunlearn.data import synth_private, write_table


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-o", "--output", default="pr.csv")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--rows", type=int, default=2000)
    args = ap.parse_args()
    raw, schema = synth_private(args.seed, args.rows)
    write_table(raw, schema, args.output)
    print(f"wrote {args.rows} rows, {raw.y.mean():.3f} positive, to {args.output}")


if __name__ == "__main__":
    main()
