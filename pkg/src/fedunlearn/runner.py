"""Config-driven benchmark orchestration and report rendering.

Every number in a report is re-read from the per-run ``metrics.csv`` files,
so ``report`` reproduces ``bench`` output exactly.

Output layout under ``output_dir``::

    <dataset>/<cell>/seed_<s>/{metrics.csv, manifest.yaml, <algorithm>.bin}
    <dataset>/<cell>/curves/<algorithm>/{seed_<s>.csv, mean.csv}
    summary.csv, report_<layout>.{md,csv}, errors.yaml

where ``<cell>`` is ``feature-<name>`` or ``rate-<rate>``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import os
import zlib
from collections import defaultdict
from dataclasses import asdict, dataclass, field, fields, replace
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np
import yaml

from . import data as D
from .fedsim import AccessLog, FedConfig, RoundHistory, RoundRecord
from .metrics import FidelityReport, residual_norm, rounds_to_convergence, summarize_runs
from .model import ModelSpec, ParamVector, predict_proba
from .unlearn import (
    FEATURE_ALGORITHMS,
    ROW_ALGORITHMS,
    Feature,
    Rows,
    UnlearnTask,
    World,
    run_finetune_feature,
    run_retrain,
    run_unlearn_rows,
    train_original,
)

log = logging.getLogger(__name__)

DATA_DIR_ENV = "FEDUNLEARN_DATA_DIR"
FIDELITY_METRICS = ("f1", "tpr", "ppv")
METRIC_LABELS = {"f1": "F1", "tpr": "TPR", "ppv": "PPV", "residual_norm": "residual", "rounds": "rounds"}
LAYOUTS = ("fidelity", "certifiability", "efficiency", "rates")


class ConfigError(ValueError):
    pass


# -- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class ModelSettings:
    kind: str = "logistic"
    hidden_dim: int = 16
    init_scale: float = 0.1


@dataclass(frozen=True)
class FedSettings:
    n_clients: int = 5
    n_rounds: int = 100
    local_epochs: int = 1
    batch_size: int = 32
    learning_rate: float | None = None


@dataclass(frozen=True)
class UnlearnSettings:
    budget_rounds: int | None = None
    ascent_lr_scale: float = 3.0
    kl_weight: float = 1.0


@dataclass(frozen=True)
class DataSettings:
    test_fraction: float = 0.2
    synth_rows: int = 2000
    synth_seed: int = 7
    dataset_dir: str | None = None


@dataclass(frozen=True)
class MetricSettings:
    epsilon: float = 0.02
    patience: int = 5


@dataclass(frozen=True)
class ExperimentConfig:
    datasets: tuple[str, ...]
    scenario: str
    algorithms: tuple[str, ...]
    rates: tuple[float, ...] = ()
    feature: str | None = None
    n_repeats: int = 10
    base_seed: int = 0
    output_dir: str = "runs"
    model: ModelSettings = field(default_factory=ModelSettings)
    fed: FedSettings = field(default_factory=FedSettings)
    unlearn: UnlearnSettings = field(default_factory=UnlearnSettings)
    data: DataSettings = field(default_factory=DataSettings)
    metrics: MetricSettings = field(default_factory=MetricSettings)

    @property
    def seeds(self) -> range:
        return range(self.base_seed, self.base_seed + self.n_repeats)

    def fed_config(self, shuffle_seed: int) -> FedConfig:
        f = self.fed
        return FedConfig(f.n_rounds, f.local_epochs, f.batch_size, f.learning_rate, shuffle_seed)

    def digest(self) -> str:
        d = config_to_dict(self)
        d.pop("output_dir")
        d["data"].pop("dataset_dir")
        return hashlib.sha256(yaml.safe_dump(d, sort_keys=True).encode()).hexdigest()[:16]


_SECTIONS = {"model": ModelSettings, "fed": FedSettings, "unlearn": UnlearnSettings,
             "data": DataSettings, "metrics": MetricSettings}
_TOP_KEYS = {"dataset", "scenario", "rate", "feature", "algorithms", "n_repeats", "base_seed", "output_dir"}


def _section(cls, raw, name):
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    try:
        return cls(**raw)
    except TypeError as e:
        raise ConfigError(f"bad section {name!r}: {e}") from None


def _as_tuple(v):
    if v is None:
        return ()
    return tuple(v) if isinstance(v, (list, tuple)) else (v,)


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(raw) - _TOP_KEYS - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("dataset", "scenario", "algorithms"):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")

    datasets = tuple(str(d) for d in _as_tuple(raw["dataset"]))
    bad = [d for d in datasets if d not in D.DATASET_IDS]
    if not datasets or bad:
        raise ConfigError(f"unknown dataset id(s) {bad}; expected one of {D.DATASET_IDS}")
    scenario = raw["scenario"]
    if scenario not in ("feature", "rows"):
        raise ConfigError("scenario must be 'feature' or 'rows'")
    algorithms = tuple(str(a) for a in _as_tuple(raw["algorithms"]))
    allowed = FEATURE_ALGORITHMS if scenario == "feature" else ROW_ALGORITHMS
    wrong = [a for a in algorithms if a not in allowed]
    if not algorithms or wrong:
        raise ConfigError(f"algorithm(s) {wrong} cannot be paired with the {scenario} scenario")
    if len(set(algorithms)) != len(algorithms):
        raise ConfigError("duplicate algorithms")

    rates = tuple(float(r) for r in _as_tuple(raw.get("rate")))
    feature = raw.get("feature")
    if scenario == "rows":
        if not rates or any(not 0 < r < 1 for r in rates):
            raise ConfigError("rows scenario needs rate(s) in (0, 1)")
        if feature is not None:
            raise ConfigError("feature is only valid for the feature scenario")
    elif rates:
        raise ConfigError("rate is only valid for the rows scenario")

    sections = {k: _section(cls, raw.get(k), k) for k, cls in _SECTIONS.items()}
    model, fed, unl = sections["model"], sections["fed"], sections["unlearn"]
    if model.kind not in ("logistic", "mlp"):
        raise ConfigError(f"unknown model kind {model.kind!r}")
    if fed.learning_rate is None:
        fed = replace(fed, learning_rate=0.05 if model.kind == "logistic" else 0.01)
    if unl.budget_rounds is None:
        unl = replace(unl, budget_rounds=fed.n_rounds)
    if min(fed.n_clients, fed.local_epochs, fed.batch_size) < 1 or fed.n_rounds < 0 or fed.learning_rate <= 0:
        raise ConfigError("fed settings out of range")
    n_repeats = int(raw.get("n_repeats", 10))
    if n_repeats < 1:
        raise ConfigError("n_repeats must be >= 1")
    return ExperimentConfig(
        datasets=datasets,
        scenario=scenario,
        algorithms=algorithms,
        rates=rates,
        feature=None if feature is None else str(feature),
        n_repeats=n_repeats,
        base_seed=int(raw.get("base_seed", 0)),
        output_dir=str(raw.get("output_dir", "runs")),
        model=model,
        fed=fed,
        unlearn=unl,
        data=sections["data"],
        metrics=sections["metrics"],
    )


def config_to_dict(cfg: ExperimentConfig) -> dict:
    d = {
        "dataset": cfg.datasets[0] if len(cfg.datasets) == 1 else list(cfg.datasets),
        "scenario": cfg.scenario,
        "algorithms": list(cfg.algorithms),
        "n_repeats": cfg.n_repeats,
        "base_seed": cfg.base_seed,
        "output_dir": cfg.output_dir,
    }
    if cfg.rates:
        d["rate"] = cfg.rates[0] if len(cfg.rates) == 1 else list(cfg.rates)
    if cfg.feature is not None:
        d["feature"] = cfg.feature
    for name in _SECTIONS:
        d[name] = asdict(getattr(cfg, name))
    return d


def parse_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ConfigError(f"malformed config {path}: {e}") from None
    return config_from_dict(raw)


def serialize_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


# -- per-seed pipeline ---------------------------------------------------------


def derive_seed(seed: int, tag: str) -> int:
    return int(np.random.SeedSequence([seed, zlib.crc32(tag.encode())]).generate_state(1)[0])


@dataclass
class CellResult:
    """Everything one (dataset, cell, seed) produced."""

    cell: str
    metrics: list[tuple[str, str, float]]
    histories: dict[str, RoundHistory]
    params: dict[str, ParamVector]
    manifest: dict


def _fid(h: RoundHistory) -> FidelityReport:
    return h.records[-1].fidelity if h.records else FidelityReport(0.0, 0.0, 0.0)


def resolve_dataset_dir(cfg: ExperimentConfig, override: str | None = None) -> str | None:
    return override or cfg.data.dataset_dir or os.environ.get(DATA_DIR_ENV) or "data"


def load_raw(cfg: ExperimentConfig, dataset_id: str, dataset_dir: str | None):
    return D.load_dataset(dataset_id, dataset_dir, seed=cfg.data.synth_seed, synth_rows=cfg.data.synth_rows)


def build_world(cfg: ExperimentConfig, raw: D.RawTable, schema: D.Schema, seed: int, rate: float = 0.0) -> World:
    tr, te = D.split_train_test(raw.n_rows, raw.y, cfg.data.test_fraction, derive_seed(seed, "split"))
    ds, _ = D.fit_transform(raw, schema, tr)
    shards = D.partition_clients(tr, cfg.fed.n_clients, derive_seed(seed, "clients"))
    forget = D.select_forget_rows(tr, rate, derive_seed(seed, f"forget-{rate!r}"))
    spec = ModelSpec(cfg.model.kind, ds.n_cols, cfg.model.hidden_dim, seed, cfg.model.init_scale)
    return World(ds, D.SplitPlan(tr, te, shards, forget, seed), spec)


def _training_cfg(cfg: ExperimentConfig, seed: int) -> FedConfig:
    return cfg.fed_config(derive_seed(seed, "shuffle"))


def train_seed(cfg, raw, schema, seed, access=None):
    world = build_world(cfg, raw, schema, seed)
    params, hist = train_original(world, _training_cfg(cfg, seed), access)
    return world, params, hist


def run_seed(cfg: ExperimentConfig, dataset_id: str, raw: D.RawTable, schema: D.Schema, seed: int,
             trained: tuple | None = None) -> list[CellResult]:
    """Train the original model once, then run every configured cell and algorithm."""
    access = AccessLog()
    if trained is None:
        world, p_train, h_train = train_seed(cfg, raw, schema, seed, access)
    else:
        world, p_train, h_train = trained
    fed = _training_cfg(cfg, seed)
    budget = cfg.unlearn.budget_rounds
    ul_seed = derive_seed(seed, "unlearn")
    ms = cfg.metrics
    test_set = set(int(i) for i in world.plan.test_idx)
    results = []

    if cfg.scenario == "feature":
        cells = [("feature-" + (cfg.feature or schema.default_unlearn_feature), None)]
    else:
        cells = [(f"rate-{r!r}", r) for r in cfg.rates]

    for cell, rate in cells:
        runs: dict[str, tuple[ParamVector, RoundHistory]] = {"train": (p_train, h_train)}
        retrain_access = AccessLog()
        if rate is None:
            fname = cell[len("feature-"):]
            if fname not in schema.feature_names:
                raise D.DataError(f"{dataset_id}: unknown feature {fname!r}")
            cw = world
            scenario = Feature(fname)
            probe_x = world.data.x
            kind = "full_data"
        else:
            cw = build_world(cfg, raw, schema, seed, rate)
            scenario = Rows(cw.plan.forget_idx, rate)
            probe_x = cw.data.x[cw.plan.forget_idx]
            kind = "forget_set"
            if len(cw.plan.forget_idx) == 0:
                raise D.DataError(f"{dataset_id}: forget set empty at rate {rate}")
        # retrain is the certifiability oracle, so it always runs
        algos = ("retrain",) + tuple(a for a in cfg.algorithms if a != "retrain")
        for algo in algos:
            task = UnlearnTask(scenario, algo, fed.n_rounds if algo == "retrain" else budget, ul_seed)
            if algo == "retrain":
                runs[algo] = run_retrain(task, cw, fed, retrain_access)
            elif algo == "finetune":
                runs[algo] = run_finetune_feature(p_train, task, cw, fed, access)
            else:
                runs[algo] = run_unlearn_rows(p_train, task, cw, fed, cfg.unlearn.ascent_lr_scale,
                                              cfg.unlearn.kl_weight, access)
        retrain_probs = predict_proba(runs["retrain"][0], cw.spec, probe_x)
        metrics = []
        reported = [a for a in cfg.algorithms] + (["train"] if cfg.scenario == "feature" else [])
        for algo in reported:
            p, h = runs[algo]
            fr = _fid(h)
            metrics += [(algo, "f1", fr.f1), (algo, "tpr", fr.tpr), (algo, "ppv", fr.ppv)]
            res = residual_norm(predict_proba(p, cw.spec, probe_x), retrain_probs, kind).residual_norm
            metrics.append((algo, "residual_norm", res))
            if len(h):
                metrics.append((algo, "rounds", float(rounds_to_convergence(h, ms.epsilon, ms.patience))))
        touched = access.rows | retrain_access.rows
        forget_hits = 0 if rate is None else len(retrain_access.rows & set(int(i) for i in cw.plan.forget_idx))
        manifest = {
            "dataset": dataset_id,
            "cell": cell,
            "scenario": cfg.scenario,
            "target": scenario.name if rate is None else rate,
            "algorithms": list(reported),
            "seed": seed,
            "seeds": {
                "split": derive_seed(seed, "split"),
                "clients": derive_seed(seed, "clients"),
                "forget": derive_seed(seed, f"forget-{(rate or 0.0)!r}"),
                "init": seed,
                "shuffle": fed.shuffle_seed,
                "unlearn_shuffle": ul_seed,
            },
            "config_digest": cfg.digest(),
            "n_rounds": fed.n_rounds,
            "budget_rounds": budget,
            "n_forget": int(len(cw.plan.forget_idx)) if rate is not None else 0,
            "client_sizes": [int(len(v)) for v in cw.plan.client_assignment.values()],
            "test_rows_touched": len(touched & test_set),
            "forget_rows_touched_by_retrain": forget_hits,
            "certifiability_rows": kind,
        }
        results.append(CellResult(cell, metrics, {a: runs[a][1] for a in reported},
                                  {a: runs[a][0] for a in reported}, manifest))
    return results


# -- persistence ---------------------------------------------------------------


def _write(path: Path, text: str | bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(text, bytes):
        path.write_bytes(text)
    else:
        path.write_text(text)


def persist_cell(out: Path, dataset_id: str, res: CellResult, seed: int):
    run_dir = out / dataset_id / res.cell / f"seed_{seed}"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["algorithm", "metric", "value"])
    for algo, metric, value in res.metrics:
        w.writerow([algo, metric, repr(float(value))])
    _write(run_dir / "metrics.csv", buf.getvalue())
    _write(run_dir / "manifest.yaml", yaml.safe_dump(res.manifest, sort_keys=False))
    for algo, p in res.params.items():
        _write(run_dir / f"{algo}.bin", p.to_bytes())
    for algo, h in res.histories.items():
        _write(out / dataset_id / res.cell / "curves" / algo / f"seed_{seed}.csv", h.to_csv())


@dataclass(frozen=True)
class SummaryRow:
    dataset: str
    cell: str
    algorithm: str
    metric: str
    mean: float
    std: float
    n_runs: int


def _seed_of(path: Path) -> int:
    return int(path.parts[-2][len("seed_"):])


def collect_summaries(out: str | Path, seeds=None) -> list[SummaryRow]:
    """Aggregate persisted metrics.csv files under `out` into mean/std rows.

    `seeds` restricts aggregation to those run seeds (default: all found).
    """
    out = Path(out)
    values: dict[tuple, list[float]] = defaultdict(list)
    order: dict[tuple, None] = {}
    paths = sorted(out.glob("*/*/seed_*/metrics.csv"), key=lambda p: (p.parts[-4], p.parts[-3], _seed_of(p)))
    for path in paths:
        if seeds is not None and _seed_of(path) not in seeds:
            continue
        dataset, cell = path.parts[-4], path.parts[-3]
        with path.open(newline="") as fh:
            for row in csv.DictReader(fh):
                key = (dataset, cell, row["algorithm"], row["metric"])
                order.setdefault(key)
                values[key].append(float(row["value"]))
    rows = []
    for key in order:
        m, s = summarize_runs(values[key])
        rows.append(SummaryRow(*key, m, s, len(values[key])))
    return rows


def write_summary(out: Path, rows: list[SummaryRow]):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dataset", "cell", "algorithm", "metric", "mean", "std", "n_runs"])
    for r in rows:
        w.writerow([r.dataset, r.cell, r.algorithm, r.metric, repr(r.mean), repr(r.std), r.n_runs])
    _write(out / "summary.csv", buf.getvalue())


# -- reports ---------------------------------------------------------------------


def fmt_cell(mean: float, std: float) -> str:
    q = Decimal("0.001")
    m = Decimal(repr(float(mean))).quantize(q, rounding=ROUND_HALF_UP)
    s = Decimal(repr(float(std))).quantize(q, rounding=ROUND_HALF_UP)
    return f"{m} ({s})"


@dataclass
class ReportTable:
    row_headers: tuple[str, ...]
    columns: list[str]
    rows: list[tuple[tuple[str, ...], list[SummaryRow | None]]]
    best: str | None  # "max", "min" or None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(self.row_headers) + self.columns)
        for keys, cells in self.rows:
            w.writerow(list(keys) + [fmt_cell(c.mean, c.std) if c else "" for c in cells])
        return buf.getvalue()

    def to_markdown(self) -> str:
        head = list(self.row_headers) + self.columns
        lines = ["| " + " | ".join(head) + " |", "|" + "|".join(["---"] * len(self.row_headers) + ["---:"] * len(self.columns)) + "|"]
        for keys, cells in self.rows:
            present = [c.mean for c in cells if c is not None]
            target = None
            if self.best and len(present) > 1:
                target = max(present) if self.best == "max" else min(present)
            text = []
            for c in cells:
                if c is None:
                    text.append("")
                    continue
                t = fmt_cell(c.mean, c.std)
                text.append(f"**{t}**" if target is not None and c.mean == target else t)
            lines.append("| " + " | ".join(list(keys) + text) + " |")
        return "\n".join(lines) + "\n"


def _algorithm_order(rows: list[SummaryRow]) -> list[str]:
    seen = []
    for r in rows:
        if r.algorithm not in seen:
            seen.append(r.algorithm)
    return seen


def build_table(summaries: list[SummaryRow], layout: str) -> ReportTable:
    if layout not in LAYOUTS:
        raise ValueError(f"unknown layout {layout!r}")
    if not summaries:
        raise ValueError("no summaries to report")
    idx = {(r.dataset, r.cell, r.algorithm, r.metric): r for r in summaries}
    algos = _algorithm_order(summaries)
    groups = list(dict.fromkeys((r.dataset, r.cell) for r in summaries))
    multi_cell = len({c for _, c in groups}) > 1 or len(groups) != len({d for d, _ in groups})

    def label(ds, cell):
        return f"{ds.upper()} {cell}" if multi_cell else ds.upper()

    if layout == "fidelity":
        rows = [((label(ds, cell), METRIC_LABELS[m]), [idx.get((ds, cell, a, m)) for a in algos])
                for ds, cell in groups for m in FIDELITY_METRICS]
        return ReportTable(("Data", "Met"), algos, rows, "max")
    if layout == "rates":
        rows = []
        for ds, cell in groups:
            rate = cell[len("rate-"):] if cell.startswith("rate-") else cell
            key = rate if len({d for d, _ in groups}) == 1 else f"{ds.upper()} {rate}"
            rows += [((key, METRIC_LABELS[m]), [idx.get((ds, cell, a, m)) for a in algos]) for m in FIDELITY_METRICS]
        return ReportTable(("rate", "loss"), algos, rows, "max")
    if layout == "efficiency":
        rows = [((label(ds, cell),), [idx.get((ds, cell, a, "rounds")) for a in algos]) for ds, cell in groups]
        return ReportTable(("Data",), algos, rows, "min")
    # certifiability: one row per non-oracle algorithm, one column per dataset
    cols = [label(ds, cell) for ds, cell in groups]
    rows = [((a,), [idx.get((ds, cell, a, "residual_norm")) for ds, cell in groups])
            for a in algos if a not in ("retrain", "train")]
    return ReportTable(("algorithm",), cols, rows, None)


def emit_report(summaries: list[SummaryRow], layout: str, out: str | Path) -> tuple[Path, Path]:
    table = build_table(summaries, layout)
    out = Path(out)
    md, cs = out / f"report_{layout}.md", out / f"report_{layout}.csv"
    _write(md, table.to_markdown())
    _write(cs, table.to_csv())
    return md, cs


def emit_curves(histories: dict[tuple[str, int], RoundHistory], cell_dir: str | Path) -> list[Path]:
    """One CSV per (algorithm, seed) plus a per-algorithm mean over seeds."""
    if not histories:
        raise ValueError("no histories to write")
    cell_dir = Path(cell_dir)
    written = []
    by_algo: dict[str, list[tuple[int, RoundHistory]]] = defaultdict(list)
    for (algo, seed), h in sorted(histories.items()):
        path = cell_dir / "curves" / algo / f"seed_{seed}.csv"
        _write(path, h.to_csv())
        written.append(path)
        by_algo[algo].append((seed, h))
    for algo, runs in by_algo.items():
        n = min(len(h) for _, h in runs)
        mean = RoundHistory()
        for r in range(n):
            recs = [h.records[r].fidelity for _, h in runs]
            mean.append(RoundRecord(r + 1, "", FidelityReport(
                float(np.mean([x.f1 for x in recs])),
                float(np.mean([x.tpr for x in recs])),
                float(np.mean([x.ppv for x in recs])),
            )))
        path = cell_dir / "curves" / algo / "mean.csv"
        _write(path, mean.to_csv())
        written.append(path)
    return written


def read_curves(cell_dir: str | Path, seeds=None) -> dict[tuple[str, int], RoundHistory]:
    out = {}
    for path in sorted(Path(cell_dir).glob("curves/*/seed_*.csv")):
        seed = int(path.stem[len("seed_"):])
        if seeds is None or seed in seeds:
            out[(path.parts[-2], seed)] = RoundHistory.from_csv(path.read_text())
    return out


def layouts_for(cfg_or_summaries) -> list[str]:
    if isinstance(cfg_or_summaries, ExperimentConfig):
        cfg = cfg_or_summaries
        base = ["fidelity", "certifiability", "efficiency"]
        return base + (["rates"] if cfg.scenario == "rows" and len(cfg.rates) > 1 else [])
    cells = {r.cell for r in cfg_or_summaries}
    base = ["fidelity", "certifiability", "efficiency"]
    return base + (["rates"] if sum(c.startswith("rate-") for c in cells) > 1 else [])


def render_reports(out: str | Path, layouts: list[str] | None = None, seeds=None) -> list[Path]:
    """Re-render summary, reports and mean curves purely from persisted per-run files."""
    out = Path(out)
    rows = collect_summaries(out, seeds)
    if not rows:
        raise FileNotFoundError(f"no per-run metrics under {out}")
    write_summary(out, rows)
    paths = []
    for layout in layouts or layouts_for(rows):
        paths.extend(emit_report(rows, layout, out))
    for cell_dir in sorted({out / r.dataset / r.cell for r in rows}):
        curves = read_curves(cell_dir, seeds)
        if curves:
            emit_curves(curves, cell_dir)
    return paths


def run_benchmark(cfg: ExperimentConfig, dataset_dir: str | None = None, out: str | Path | None = None) -> Path:
    """Run every (dataset, seed), persist per-run artifacts, then render reports."""
    out = Path(out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset_dir = resolve_dataset_dir(cfg, dataset_dir)
    errors = {}
    for ds_id in cfg.datasets:
        try:
            raw, schema = load_raw(cfg, ds_id, dataset_dir)
            if cfg.feature is not None and cfg.feature not in schema.feature_names:
                raise D.DataError(f"{ds_id}: unknown feature {cfg.feature!r}")
        except (OSError, D.DataError) as e:
            log.error("dataset %s skipped: %s", ds_id, e)
            errors[ds_id] = str(e)
            continue
        for seed in cfg.seeds:
            log.info("%s seed %d", ds_id, seed)
            for res in run_seed(cfg, ds_id, raw, schema, seed):
                persist_cell(out, ds_id, res, seed)
    _write(out / "config.yaml", serialize_config(cfg))
    if errors:
        _write(out / "errors.yaml", yaml.safe_dump(errors, sort_keys=True))
    if any(out.glob("*/*/seed_*/metrics.csv")):
        render_reports(out, layouts_for(cfg), set(cfg.seeds))
    return out
