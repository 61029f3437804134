"""Acceptance suite: one test per criterion, each timed against its budget.

Every test records a PASS/FAIL line (shown in the terminal summary) before
asserting, so a full run lists all twelve verdicts even when some fail.
Benchmarks run from the shipped configs against the vendored data/ files.
"""

import csv
import filecmp
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from fedunlearn import runner as R
from fedunlearn.cli import main
from fedunlearn.data import Dataset, zero_feature
from fedunlearn.fedsim import ClientState, FedConfig, fedavg_aggregate, local_update, run_federated
from fedunlearn.metrics import residual_norm
from fedunlearn.model import ModelSpec, ParamVector, bce_grad, init_params, predict_proba
from fedunlearn.objectives import Objective
from fedunlearn.unlearn import Feature, Rows, UnlearnTask, run_finetune_feature, run_retrain, train_original
from oracles import fd_gradient, logistic_sgd, random_draw, rel_error

REPO = Path(__file__).resolve().parents[1]
CONFIGS = REPO / "configs"
DATA = str(REPO / "data")


def bench(name: str, out: Path):
    """Run a shipped config and return (config, output dir, seconds)."""
    cfg = R.parse_config(CONFIGS / name)
    t0 = time.perf_counter()
    R.run_benchmark(cfg, DATA, out)
    return cfg, out, time.perf_counter() - t0


def per_seed(out: Path, ds: str, cell: str, algo: str, metric: str) -> dict[int, float]:
    vals = {}
    for path in (out / ds / cell).glob("seed_*/metrics.csv"):
        with path.open() as fh:
            for row in csv.DictReader(fh):
                if row["algorithm"] == algo and row["metric"] == metric:
                    vals[int(path.parent.name[5:])] = float(row["value"])
    return vals


def mean_of(out, ds, cell, algo, metric):
    v = per_seed(out, ds, cell, algo, metric)
    assert len(v) == 10, f"expected 10 seeds for {ds}/{cell}/{algo}, found {len(v)}"
    return float(np.mean(list(v.values())))


@pytest.fixture(scope="module")
def db_feature(tmp_path_factory):
    return bench("db_feature.yaml", tmp_path_factory.mktemp("db_feature"))


@pytest.fixture(scope="module")
def db_rows(tmp_path_factory):
    return bench("db_rows.yaml", tmp_path_factory.mktemp("db_rows"))


def test_c01_gradient_correctness(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = {}
    for kind in ("logistic", "mlp"):
        spec = ModelSpec(kind, 6, hidden_dim=5)
        worst[kind] = max(rel_error(bce_grad(p, spec, b).values, fd_gradient(p, spec, b))
                          for p, b in (random_draw(rng, spec) for _ in range(100)))
    dt = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-4 and dt < 30
    criterion(1, ok, f"max rel err logistic {worst['logistic']:.1e}, mlp {worst['mlp']:.1e}; {dt:.1f}s")
    assert ok


def test_c02_fedavg_degeneracy(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    x = rng.normal(size=(200, 5))
    y = (x @ rng.normal(size=5) + 0.5 * rng.normal(size=200) > 0).astype(np.int64)
    ds = Dataset(x, y, tuple("abcde"), tuple("abcde"))
    spec = ModelSpec("logistic", 5)
    cfg = FedConfig(n_rounds=50, batch_size=10_000, learning_rate=0.5)
    client = ClientState(0, ds, np.arange(200))
    oracle = logistic_sgd(x, y.astype(float), 0.5, 50)
    p, worst = init_params(spec), 0.0
    for r in range(1, 51):
        p = fedavg_aggregate([local_update(client, p, Objective(), cfg, spec, r)])
        worst = max(worst, float(np.max(np.abs(p.values - oracle[r - 1]))))
    final, hist = run_federated([client], spec, init_params(spec), Objective(), cfg, ds)
    worst = max(worst, float(np.max(np.abs(final.values - oracle[-1]))))
    dt = time.perf_counter() - t0
    ok = worst < 1e-9 and len(hist) == 50 and dt < 30
    criterion(2, ok, f"max |fl - sgd| over 50 rounds {worst:.1e}; {dt:.1f}s")
    assert ok


def test_c03_aggregation_properties(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    lay = (("w", (4,)), ("b", ()))
    weight_err = perm_err = ident_err = 0.0
    for _ in range(300):
        k = int(rng.integers(1, 9))
        vals = rng.normal(scale=10, size=(k, 5))
        counts = rng.integers(1, 1000, size=k)
        ups = [(ParamVector(v, lay), int(n)) for v, n in zip(vals, counts)]
        # weights sum to 1 <=> the aggregate of a repeated vector is that vector
        same = fedavg_aggregate([(ups[0][0], n) for _, n in ups]).values
        weight_err = max(weight_err, float(np.max(np.abs(same - vals[0]))))
        order = rng.permutation(k)
        a = fedavg_aggregate(ups).values
        b = fedavg_aggregate([ups[i] for i in order]).values
        perm_err = max(perm_err, float(np.max(np.abs(a - b))))
        ident_err = max(ident_err, float(np.max(np.abs(fedavg_aggregate(ups[:1]).values - vals[0]))))
    # end to end: permuting the client list in a full run
    x = rng.normal(size=(120, 4))
    ds = Dataset(x, (x[:, 0] > 0).astype(np.int64), tuple("abcd"), tuple("abcd"))
    spec = ModelSpec("mlp", 4, hidden_dim=3)
    clients = [ClientState(i, ds, np.arange(i, 120, 4)) for i in range(4)]
    cfg = FedConfig(n_rounds=10, batch_size=8)
    p1, _ = run_federated(clients, spec, init_params(spec), Objective(), cfg, ds)
    p2, _ = run_federated(clients[::-1], spec, init_params(spec), Objective(), cfg, ds)
    perm_err = max(perm_err, float(np.max(np.abs(p1.values - p2.values))))
    dt = time.perf_counter() - t0
    ok = weight_err < 1e-9 and perm_err < 1e-9 and ident_err == 0.0 and dt < 10
    criterion(3, ok, f"weight-sum err {weight_err:.1e}, permutation {perm_err:.1e}, identity {ident_err:.1e}; {dt:.1f}s")
    assert ok


def test_c04_certifiability_floor(criterion):
    t0 = time.perf_counter()
    base = R.parse_config(CONFIGS / "db_rows.yaml")
    cfg = replace(base, fed=replace(base.fed, n_rounds=20))
    raw, schema = R.load_raw(cfg, "db", DATA)
    world = R.build_world(cfg, raw, schema, 0, 0.05)
    fed = cfg.fed_config(11)
    task = UnlearnTask(Rows(world.plan.forget_idx, 0.05), "retrain", fed.n_rounds)
    pa, _ = run_retrain(task, world, fed)
    pb, _ = run_retrain(task, world, fed)
    probe = world.data.x[world.plan.forget_idx]
    qa = predict_proba(pa, world.spec, probe)
    self_norm = residual_norm(qa, qa).residual_norm
    twin_norm = residual_norm(qa, predict_proba(pb, world.spec, probe)).residual_norm
    dt = time.perf_counter() - t0
    ok = self_norm == 0.0 and twin_norm == 0.0 and dt < 10
    criterion(4, ok, f"self {self_norm!r}, retrain twin {twin_norm!r}; {dt:.1f}s")
    assert ok


def test_c05_feature_unlearning_exactness(criterion):
    t0 = time.perf_counter()
    base = R.parse_config(CONFIGS / "db_feature.yaml")
    raw, schema = R.load_raw(base, "db", DATA)
    rng = np.random.default_rng(5)
    mismatches = checked = 0
    for kind in ("logistic", "mlp"):
        cfg = replace(base, model=R.ModelSettings(kind=kind), fed=R.FedSettings(n_rounds=10, learning_rate=0.05))
        world = R.build_world(cfg, raw, schema, 0)
        fed = cfg.fed_config(1)
        trained, _ = train_original(world, fed)
        for name in schema.unlearn_candidates:
            for algo in ("retrain", "finetune"):
                task = UnlearnTask(Feature(name), algo, 5, seed=2)
                if algo == "retrain":
                    p, _ = run_retrain(task, world, fed)
                else:
                    p, _ = run_finetune_feature(trained, task, world, fed)
                test = world.test
                cols = test.columns_of(name)
                x = test.x.copy()
                x[:, cols] = rng.normal(scale=3, size=(len(x), len(cols)))
                other = Dataset(x, test.y, test.col_names, test.source_feature)
                a = predict_proba(p, world.spec, zero_feature(test, name).x)
                b = predict_proba(p, world.spec, zero_feature(other, name).x)
                mismatches += int(np.sum(a != b))
                checked += len(a)
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and dt < 30
    criterion(5, ok, f"{mismatches} differing predictions out of {checked}; {dt:.1f}s")
    assert ok


def test_c06_fidelity_band_diabetes(criterion, db_feature):
    cfg, out, dt = db_feature
    cell = "feature-" + R.D.load_schema("db").default_unlearn_feature
    retrain = mean_of(out, "db", cell, "retrain", "f1")
    finetune = mean_of(out, "db", cell, "finetune", "f1")
    ok = 0.43 <= retrain <= 0.73 and abs(finetune - retrain) <= 0.15 and dt < 300
    criterion(6, ok, f"retrain F1 {retrain:.3f}, finetune F1 {finetune:.3f} (gap {finetune - retrain:+.3f}); {dt:.0f}s")
    assert ok


def test_c07_row_unlearning_ordering(criterion, db_rows):
    cfg, out, dt = db_rows
    gd = mean_of(out, "db", "rate-0.05", "grad_diff", "f1")
    ga = mean_of(out, "db", "rate-0.05", "grad_ascent", "f1")
    rt = mean_of(out, "db", "rate-0.05", "retrain", "f1")
    ok = gd > ga and abs(gd - rt) <= 0.15 and dt < 600
    criterion(7, ok, f"grad_diff {gd:.3f} > grad_ascent {ga:.3f}; retrain {rt:.3f}; {dt:.0f}s")
    assert ok


def test_c08_catastrophic_forgetting(criterion, db_rows):
    cfg, out, _ = db_rows
    raw, schema = R.load_raw(cfg, "db", DATA)
    curves = R.read_curves(out / "db" / "rate-0.05")
    collapsed = []
    for seed in cfg.seeds:
        start = R.train_seed(cfg, raw, schema, seed)[2].f1[-1]  # F1 of the model unlearning starts from
        curve = curves[("grad_ascent", seed)].f1
        if min(curve) < 0.5 * start:
            collapsed.append(seed)
    ok = len(collapsed) >= 6
    criterion(8, ok, f"grad_ascent F1 fell below half its start in {len(collapsed)}/10 seeds")
    assert ok


def test_c09_efficiency_ordering(criterion, tmp_path_factory):
    cfg, out, dt = bench("pr_feature.yaml", tmp_path_factory.mktemp("pr_feature"))
    ft = per_seed(out, "pr", "feature-income", "finetune", "rounds")
    rt = per_seed(out, "pr", "feature-income", "retrain", "rounds")
    wins = sum(ft[s] < rt[s] for s in cfg.seeds)
    ok = len(ft) == len(rt) == 10 and wins >= 7 and dt < 300
    criterion(9, ok, f"finetune converged faster in {wins}/10 seeds "
                     f"(mean rounds {np.mean(list(ft.values())):.1f} vs {np.mean(list(rt.values())):.1f}); {dt:.0f}s")
    assert ok


def test_c10_rate_sweep(criterion, tmp_path_factory):
    cfg, out, dt = bench("rates_pr.yaml", tmp_path_factory.mktemp("rates"))
    rows = list(csv.reader((out / "report_rates.csv").open()))
    body = rows[1:]
    cells = [c for r in body for c in r[2:]]
    shape = (rows[0][2:] == list(cfg.algorithms) and [r[0] for r in body] == ["0.05"] * 3 + ["0.1"] * 3 + ["0.2"] * 3
             and [r[1] for r in body] == ["F1", "TPR", "PPV"] * 3)
    filled = sum(bool(c) for c in cells)
    ok = shape and len(cells) == 36 and filled == 36 and dt < 900
    criterion(10, ok, f"{filled}/36 cells populated, shape {'ok' if shape else 'wrong'}; {dt:.0f}s")
    assert ok


def test_c11_certifiability_band(criterion, db_feature):
    _, out, _ = db_feature
    cell = "feature-" + R.D.load_schema("db").default_unlearn_feature
    res = mean_of(out, "db", cell, "finetune", "residual_norm")
    ok = 0.05 <= res <= 0.45
    criterion(11, ok, f"finetune residual norm {res:.3f}")
    assert ok


def test_c12_determinism(criterion, tmp_path):
    cfg = tmp_path / "twice.yaml"
    cfg.write_text((CONFIGS / "smoke.yaml").read_text())
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["bench", "--config", str(cfg), "--out", str(out), "--dataset-dir", DATA]) == 0
    files = sorted(p.relative_to(a) for p in a.rglob("*")
                   if p.is_file() and (p.name.startswith("report_") or "curves" in p.parts or p.name == "summary.csv"))
    curves = [f for f in files if "curves" in f.parts]
    differing = [str(f) for f in files if not (b / f).is_file() or not filecmp.cmp(a / f, b / f, shallow=False)]
    ok = bool(curves) and not differing
    criterion(12, ok, f"{len(files)} report/curve files compared, {len(differing)} differ")
    assert ok
