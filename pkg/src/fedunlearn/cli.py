"""Command-line entry point: ``fedunlearn {bench,train,unlearn,report}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from . import runner as R
from .data import DataError
from .model import ParamVector


def _load(args) -> R.ExperimentConfig:
    cfg = R.parse_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, base_seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, output_dir=args.out)
    return cfg


def cmd_bench(args) -> int:
    cfg = _load(args)
    out = R.run_benchmark(cfg, args.dataset_dir)
    print(f"wrote {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load(args)
    out = Path(cfg.output_dir)
    seed = cfg.base_seed
    for ds_id in cfg.datasets:
        raw, schema = R.load_raw(cfg, ds_id, R.resolve_dataset_dir(cfg, args.dataset_dir))
        world, params, hist = R.train_seed(cfg, raw, schema, seed)
        run_dir = out / ds_id / "train" / f"seed_{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "train.bin").write_bytes(params.to_bytes())
        (run_dir / "train_curve.csv").write_text(hist.to_csv())
        manifest = {"dataset": ds_id, "seed": seed, "config_digest": cfg.digest(),
                    "n_rounds": cfg.fed.n_rounds, "final_f1": hist.f1[-1] if len(hist) else None,
                    "param_digest": params.digest()}
        (run_dir / "manifest.yaml").write_text(yaml.safe_dump(manifest, sort_keys=False))
        print(f"{ds_id} seed {seed}: F1 {manifest['final_f1']}  -> {run_dir}")
    return 0


def cmd_unlearn(args) -> int:
    """Run the configured algorithms for one seed, reusing a `train` checkpoint when present."""
    cfg = _load(args)
    out = Path(cfg.output_dir)
    seed = cfg.base_seed
    for ds_id in cfg.datasets:
        raw, schema = R.load_raw(cfg, ds_id, R.resolve_dataset_dir(cfg, args.dataset_dir))
        ckpt = out / ds_id / "train" / f"seed_{seed}" / "train.bin"
        trained = None
        if ckpt.is_file():
            world = R.build_world(cfg, raw, schema, seed)
            params = ParamVector.from_bytes(ckpt.read_bytes())
            if params.layout != world.spec.layout():
                raise DataError(f"checkpoint {ckpt} does not match the configured model")
            trained = (world, params, _replay_history(cfg, world, params, raw, schema, seed))
        for res in R.run_seed(cfg, ds_id, raw, schema, seed, trained):
            R.persist_cell(out, ds_id, res, seed)
            f1 = {a: v for a, m, v in res.metrics if m == "f1"}
            print(f"{ds_id} {res.cell} seed {seed}: " + ", ".join(f"{a} F1 {v:.3f}" for a, v in f1.items()))
    return 0


def _replay_history(cfg, world, params, raw, schema, seed):
    # The training curve is not stored in the checkpoint; retrain deterministically
    # and check that the digest matches before trusting it.
    _, p, h = R.train_seed(cfg, raw, schema, seed)
    if p.digest() != params.digest():
        raise DataError("train checkpoint was produced by a different config or seed")
    return h


def cmd_report(args) -> int:
    out = Path(args.out or (R.parse_config(args.config).output_dir if args.config else "runs"))
    layouts = args.layout or None
    for p in R.render_reports(out, layouts):
        print(f"wrote {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedunlearn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("bench", cmd_bench), ("train", cmd_train), ("unlearn", cmd_unlearn)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None, help="override base_seed")
        p.add_argument("--out", default=None, help="override output_dir")
        p.add_argument("--dataset-dir", default=None, help=f"CSV directory (else ${R.DATA_DIR_ENV}, else ./data)")
        p.set_defaults(func=fn)
    p = sub.add_parser("report", help="re-render reports from persisted per-run metrics")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None, help=argparse.SUPPRESS)
    p.add_argument("--dataset-dir", default=None, help=argparse.SUPPRESS)
    p.add_argument("--layout", action="append", choices=R.LAYOUTS)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (R.ConfigError, DataError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
