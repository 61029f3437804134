"""Tabular datasets: loading, preprocessing, splitting and unlearning views.

Everything here is a pure function over immutable inputs. Row indices always
refer to positions in the loaded table, so a split plan computed once can be
reused by every algorithm in a run.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from importlib import resources
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
import yaml

log = logging.getLogger(__name__)

MISSING_TOKENS = frozenset({"", "?", "NA", "NaN", "nan"})
MISSING_CATEGORY = "__missing__"
DATASET_IDS = ("bl", "db", "gc", "ad", "hd", "pr")


class DataError(ValueError):
    """Raised for malformed tables, schemas or index arguments."""


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: Literal["numeric", "categorical"]
    categories: tuple[str, ...] = ()


@dataclass(frozen=True)
class Schema:
    features: tuple[FeatureSpec, ...]
    label_column: str
    positive_label: tuple[str, ...]
    name: str = ""
    ignore_columns: tuple[str, ...] = ()
    unlearn_candidates: tuple[str, ...] = ()

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise DataError(f"duplicate feature names in schema {self.name!r}")
        if self.label_column in names:
            raise DataError("label column listed among features")
        for f in self.features:
            if f.kind == "categorical" and len(f.categories) < 2:
                raise DataError(f"categorical feature {f.name!r} needs >= 2 categories")
            if f.kind == "numeric" and f.categories:
                raise DataError(f"numeric feature {f.name!r} cannot list categories")
            if f.kind not in ("numeric", "categorical"):
                raise DataError(f"unknown feature kind {f.kind!r}")
        for c in self.unlearn_candidates:
            if c not in names:
                raise DataError(f"unlearn candidate {c!r} is not a feature")

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def default_unlearn_feature(self) -> str:
        return self.unlearn_candidates[0] if self.unlearn_candidates else self.features[0].name

    def to_dict(self) -> dict:
        feats = []
        for f in self.features:
            d = {"name": f.name, "kind": f.kind}
            if f.categories:
                d["categories"] = list(f.categories)
            feats.append(d)
        pos = self.positive_label[0] if len(self.positive_label) == 1 else list(self.positive_label)
        return {
            "name": self.name,
            "label_column": self.label_column,
            "positive_label": pos,
            "ignore_columns": list(self.ignore_columns),
            "unlearn_candidates": list(self.unlearn_candidates),
            "features": feats,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        feats = tuple(
            FeatureSpec(
                name=str(f["name"]),
                kind=f["kind"],
                categories=tuple(str(c) for c in f.get("categories", ())),
            )
            for f in d["features"]
        )
        pos = d["positive_label"]
        pos = (str(pos),) if not isinstance(pos, list) else tuple(str(p) for p in pos)
        return cls(
            features=feats,
            label_column=str(d["label_column"]),
            positive_label=pos,
            name=str(d.get("name", "")),
            ignore_columns=tuple(str(c) for c in d.get("ignore_columns", ())),
            unlearn_candidates=tuple(str(c) for c in d.get("unlearn_candidates", ())),
        )


def load_schema(path_or_id: str | Path) -> Schema:
    """Read a schema descriptor file, or one of the bundled ones by dataset id."""
    if str(path_or_id) in DATASET_IDS:
        text = resources.files("fedunlearn.schemas").joinpath(f"{path_or_id}.yaml").read_text()
    else:
        text = Path(path_or_id).read_text()
    return Schema.from_dict(yaml.safe_load(text))


@dataclass(frozen=True)
class RawTable:
    """Typed cells, column-wise. Numeric missing cells are NaN, categorical ones None."""

    columns: dict[str, np.ndarray | tuple]
    y: np.ndarray

    @property
    def n_rows(self) -> int:
        return len(self.y)


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    col_names: tuple[str, ...]
    source_feature: tuple[str, ...]

    def __post_init__(self):
        if self.x.ndim != 2 or self.x.shape[0] != len(self.y):
            raise DataError("x row count must equal y length")
        if self.x.shape[1] != len(self.col_names) or len(self.col_names) != len(self.source_feature):
            raise DataError("column metadata does not match x width")
        if not np.all(np.isfinite(self.x)):
            raise DataError("dataset contains non-finite values")

    @property
    def n_rows(self) -> int:
        return self.x.shape[0]

    @property
    def n_cols(self) -> int:
        return self.x.shape[1]

    def columns_of(self, feature_name: str) -> list[int]:
        return [j for j, s in enumerate(self.source_feature) if s == feature_name]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.x[idx], self.y[idx], self.col_names, self.source_feature)


@dataclass(frozen=True)
class PreprocessStats:
    means: dict[str, float]
    stds: dict[str, float]
    medians: dict[str, float]
    category_columns: dict[str, dict[str, int]]
    zero_variance: tuple[str, ...] = ()


@dataclass(frozen=True)
class SplitPlan:
    train_idx: np.ndarray
    test_idx: np.ndarray
    client_assignment: dict[int, np.ndarray]
    forget_idx: np.ndarray
    seed: int

    def __post_init__(self):
        n_train = len(self.train_idx)
        if len(np.intersect1d(self.train_idx, self.test_idx)):
            raise DataError("train and test overlap")
        shards = np.concatenate(list(self.client_assignment.values())) if self.client_assignment else np.array([], int)
        if len(shards) != n_train or not np.array_equal(np.sort(shards), np.sort(self.train_idx)):
            raise DataError("client shards must partition train_idx")
        if not np.all(np.isin(self.forget_idx, self.train_idx)):
            raise DataError("forget rows must be training rows")


def round_half_up(v: float) -> int:
    return int(Decimal(repr(v)).quantize(Decimal(1), rounding=ROUND_HALF_UP))


# -- loading ---------------------------------------------------------------


def _parse_table(rows: Sequence[Sequence[str]], header: Sequence[str], schema: Schema, source: str) -> RawTable:
    header = [h.strip() for h in header]
    expected = set(schema.feature_names) | {schema.label_column}
    got = set(header)
    missing = expected - got
    extra = got - expected - set(schema.ignore_columns)
    if missing or extra or len(header) != len(got):
        raise DataError(
            f"{source}: header mismatch (missing={sorted(missing)}, unexpected={sorted(extra)})"
        )
    pos = {h: i for i, h in enumerate(header)}
    n = len(rows)
    columns: dict[str, np.ndarray | tuple] = {}
    for f in schema.features:
        j = pos[f.name]
        if f.kind == "numeric":
            col = np.empty(n, dtype=np.float64)
            for i, r in enumerate(rows):
                cell = r[j].strip()
                if cell in MISSING_TOKENS:
                    col[i] = np.nan
                    continue
                try:
                    col[i] = float(cell)
                except ValueError:
                    raise DataError(f"{source}: row {i + 2}: column {f.name!r}: cannot parse {cell!r} as a number") from None
                if not np.isfinite(col[i]):
                    raise DataError(f"{source}: row {i + 2}: column {f.name!r}: non-finite value")
            columns[f.name] = col
        else:
            cats = set(f.categories)
            vals = []
            for i, r in enumerate(rows):
                cell = r[j].strip()
                if cell in MISSING_TOKENS:
                    vals.append(None)
                elif cell in cats:
                    vals.append(cell)
                else:
                    raise DataError(f"{source}: row {i + 2}: column {f.name!r}: unknown category {cell!r}")
            columns[f.name] = tuple(vals)
    j = pos[schema.label_column]
    positives = set(schema.positive_label)
    y = np.array([1 if r[j].strip().rstrip(".") in positives else 0 for r in rows], dtype=np.int64)
    return RawTable(columns=columns, y=y)


def load_table(path: str | Path, schema: Schema) -> RawTable:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, no header") from None
        rows = [r for r in reader if r]
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise DataError(f"{path}: row {i + 2}: expected {len(header)} cells, got {len(r)}")
    return _parse_table(rows, header, schema, str(path))


# -- preprocessing ---------------------------------------------------------


def fit_transform(raw: RawTable, schema: Schema, train_idx) -> tuple[Dataset, PreprocessStats]:
    """Standardise numerics and one-hot categoricals, fitting only on train rows."""
    train_idx = np.asarray(train_idx, dtype=np.int64)
    if len(train_idx) == 0:
        raise DataError("train_idx must be non-empty")
    blocks, names, sources = [], [], []
    means, stds, medians, cat_cols = {}, {}, {}, {}
    zero_var = []
    for f in schema.features:
        col = raw.columns[f.name]
        if f.kind == "numeric":
            tr = col[train_idx]
            med = float(np.nanmedian(tr)) if np.any(~np.isnan(tr)) else 0.0
            filled = np.where(np.isnan(col), med, col)
            ftr = filled[train_idx]
            mu, sd = float(ftr.mean()), float(ftr.std())
            means[f.name], stds[f.name], medians[f.name] = mu, sd, med
            if sd <= 1e-12:
                log.warning("feature %r has zero variance on train rows; encoded as zeros", f.name)
                zero_var.append(f.name)
                z = np.zeros_like(filled)
            else:
                z = (filled - mu) / sd
            blocks.append(z[:, None])
            names.append(f.name)
            sources.append(f.name)
        else:
            cats = list(f.categories)
            if any(col[i] is None for i in train_idx):
                cats.append(MISSING_CATEGORY)
            mapping = {c: k for k, c in enumerate(cats)}
            onehot = np.zeros((raw.n_rows, len(cats)))
            for i, v in enumerate(col):
                k = mapping.get(MISSING_CATEGORY if v is None else v)
                if k is not None:
                    onehot[i, k] = 1.0
            cat_cols[f.name] = mapping
            blocks.append(onehot)
            names.extend(f"{f.name}={c}" for c in cats)
            sources.extend([f.name] * len(cats))
    x = np.hstack(blocks) if blocks else np.zeros((raw.n_rows, 0))
    ds = Dataset(x=x, y=raw.y.copy(), col_names=tuple(names), source_feature=tuple(sources))
    stats = PreprocessStats(means, stds, medians, cat_cols, tuple(zero_var))
    return ds, stats


# -- splitting -------------------------------------------------------------


def split_train_test(n_rows: int, y, test_fraction: float = 0.2, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Stratified shuffle split; falls back to an unstratified split for tiny classes."""
    if not 0 < test_fraction < 1:
        raise DataError("test_fraction must lie in (0, 1)")
    y = np.asarray(y)
    if len(y) != n_rows:
        raise DataError("label vector length must equal n_rows")
    rng = np.random.default_rng(seed)
    classes = np.unique(y)
    per_class = [np.flatnonzero(y == c) for c in classes]
    if any(len(p) < 2 for p in per_class):
        log.warning("class with fewer than 2 rows; using an unstratified split")
        perm = rng.permutation(n_rows)
        n_test = round_half_up(test_fraction * n_rows)
        return np.sort(perm[n_test:]), np.sort(perm[:n_test])
    train, test = [], []
    for p in per_class:
        p = rng.permutation(p)
        k = min(max(round_half_up(test_fraction * len(p)), 1), len(p) - 1)
        test.append(p[:k])
        train.append(p[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def partition_clients(train_idx, n_clients: int, seed: int = 0) -> dict[int, np.ndarray]:
    train_idx = np.asarray(train_idx, dtype=np.int64)
    if n_clients < 1:
        raise DataError("n_clients must be >= 1")
    if n_clients > len(train_idx):
        raise DataError(f"cannot split {len(train_idx)} rows across {n_clients} clients")
    perm = np.random.default_rng(seed).permutation(train_idx)
    return {k: np.sort(s) for k, s in enumerate(np.array_split(perm, n_clients))}


def select_forget_rows(train_idx, rate: float, seed: int = 0) -> np.ndarray:
    if not 0 <= rate <= 1:
        raise DataError("rate must lie in [0, 1]")
    train_idx = np.asarray(train_idx, dtype=np.int64)
    k = round_half_up(rate * len(train_idx))
    chosen = np.random.default_rng(seed).choice(train_idx, size=k, replace=False)
    return np.sort(chosen)


def zero_feature(ds: Dataset, feature_name: str) -> Dataset:
    """Zero every encoded column that came from `feature_name`, in all rows."""
    cols = ds.columns_of(feature_name)
    if not cols:
        raise DataError(f"unknown feature {feature_name!r}")
    x = ds.x.copy()
    x[:, cols] = 0.0
    return Dataset(x=x, y=ds.y, col_names=ds.col_names, source_feature=ds.source_feature)


# -- synthetic stand-in for the private finance table ----------------------

_PR_NUMERIC = (
    "income", "age", "loan_amount", "credit_history_years", "debt_ratio",
    "open_accounts", "late_payments", "savings", "employment_years",
    "dependents", "monthly_expenses", "credit_utilization",
)
_PR_CATEGORICAL = {
    "employment_type": ("salaried", "self_employed", "contract", "unemployed"),
    "housing": ("own", "mortgage", "rent"),
    "marital_status": ("single", "married", "divorced"),
    "education": ("secondary", "bachelor", "master", "doctorate"),
    "region": ("north", "south", "east", "west", "central"),
    "loan_purpose": ("car", "home", "education", "business", "personal"),
}
PR_PREVALENCE = 0.2


def pr_schema() -> Schema:
    feats = [FeatureSpec(n, "numeric") for n in _PR_NUMERIC]
    feats += [FeatureSpec(n, "categorical", c) for n, c in _PR_CATEGORICAL.items()]
    return Schema(
        features=tuple(feats),
        label_column="approved",
        positive_label=("1",),
        name="pr",
        unlearn_candidates=("income", "age", "late_payments", "employment_type"),
    )


def _bisect_intercept(score: np.ndarray, target: float) -> float:
    lo, hi = -30.0, 30.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if np.mean(1.0 / (1.0 + np.exp(-(score + mid)))) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def synth_private(seed: int, n_rows: int = 2000) -> tuple[RawTable, Schema]:
    """Loan-approval table with 12 numeric and 6 categorical features.

    The label is Bernoulli through a logistic link over income, late_payments,
    debt_ratio, credit_history_years, employment_type and housing. Income is
    correlated with savings, loan_amount and monthly_expenses so a model can
    partly recover when income is removed.
    """
    if n_rows < 100:
        raise DataError("n_rows must be >= 100")
    rng = np.random.default_rng(seed)
    n = n_rows
    latent = rng.standard_normal(n)
    income = np.exp(10.6 + 0.45 * latent)
    age = np.clip(rng.normal(42, 12, n), 18, 85).round()
    loan_amount = np.exp(9.3 + 0.35 * latent + 0.5 * rng.standard_normal(n))
    history = np.clip((age - 18) * rng.uniform(0.2, 0.9, n), 0, None).round(1)
    debt_ratio = np.clip(rng.beta(2, 5, n) - 0.05 * latent, 0, 1)
    open_accounts = rng.poisson(4, n).astype(float)
    late = rng.poisson(np.exp(-0.3 - 0.4 * latent)).astype(float)
    savings = np.exp(8.5 + 0.8 * latent + 0.6 * rng.standard_normal(n))
    employment = np.clip(rng.gamma(2.0, 3.0, n), 0, age - 18).round(1)
    dependents = rng.poisson(1.1, n).astype(float)
    expenses = income / 12 * rng.uniform(0.3, 0.7, n)
    utilization = np.clip(rng.beta(2, 3, n) - 0.05 * latent, 0, 1)
    numeric = dict(zip(_PR_NUMERIC, (income, age, loan_amount, history, debt_ratio, open_accounts, late,
                                     savings, employment, dependents, expenses, utilization)))
    cats = {}
    for name, levels in _PR_CATEGORICAL.items():
        p = rng.dirichlet(np.full(len(levels), 4.0))
        cats[name] = rng.choice(len(levels), size=n, p=p)

    def z(v):
        return (v - v.mean()) / v.std()

    emp_effect = np.array([0.6, 0.1, -0.2, -1.5])[cats["employment_type"]]
    housing_effect = np.array([0.5, 0.2, -0.4])[cats["housing"]]
    score = (
        1.6 * z(np.log(income))
        - 1.0 * z(late)
        - 0.8 * z(debt_ratio)
        + 0.5 * z(history)
        + emp_effect
        + housing_effect
    )
    b = _bisect_intercept(score, PR_PREVALENCE)
    y = (rng.uniform(size=n) < 1.0 / (1.0 + np.exp(-(score + b)))).astype(np.int64)

    columns: dict[str, np.ndarray | tuple] = {k: np.round(v, 4) for k, v in numeric.items()}
    for name, levels in _PR_CATEGORICAL.items():
        columns[name] = tuple(levels[k] for k in cats[name])
    return RawTable(columns=columns, y=y), pr_schema()


def write_table(raw: RawTable, schema: Schema, path: str | Path) -> None:
    """Write a RawTable back to CSV in schema column order."""
    names = schema.feature_names
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + [schema.label_column])
        pos_label = schema.positive_label[0]
        for i in range(raw.n_rows):
            row = []
            for f in schema.features:
                v = raw.columns[f.name][i]
                if v is None or (isinstance(v, float) and np.isnan(v)):
                    row.append("")
                else:
                    row.append(repr(float(v)) if f.kind == "numeric" else v)
            row.append(pos_label if raw.y[i] else "0")
            w.writerow(row)


def dataset_path(dataset_id: str, dataset_dir: str | Path) -> Path:
    return Path(dataset_dir) / f"{dataset_id}.csv"


def load_dataset(dataset_id: str, dataset_dir: str | Path | None, seed: int = 0, synth_rows: int = 2000):
    """Return (RawTable, Schema) for a dataset id; `pr` is generated."""
    if dataset_id not in DATASET_IDS:
        raise DataError(f"unknown dataset id {dataset_id!r}")
    if dataset_id == "pr":
        return synth_private(seed, synth_rows)
    if dataset_dir is None:
        raise DataError(f"dataset {dataset_id!r} needs a dataset directory")
    schema = load_schema(dataset_id)
    return load_table(dataset_path(dataset_id, dataset_dir), schema), schema
