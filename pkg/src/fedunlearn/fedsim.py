"""FedAvg simulation.

The server side (``fedavg_aggregate`` and the round loop) handles parameter
vectors and sample counts only. Rows are read inside ``local_update``, which
plays the client.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .metrics import FidelityReport, confusion, fidelity
from .model import Batch, ModelSpec, ParamVector, classify
from .objectives import Objective, objective_loss_and_grad

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ClientState:
    client_id: int
    data: Dataset
    indices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64))

    @property
    def sample_count(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class FedConfig:
    n_rounds: int = 100
    local_epochs: int = 1
    batch_size: int = 32
    learning_rate: float = 0.05
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.n_rounds < 0 or self.local_epochs < 1 or self.batch_size < 1:
            raise ValueError("local_epochs and batch_size must be >= 1, n_rounds >= 0")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")


@dataclass(frozen=True)
class RoundRecord:
    round: int
    digest: str
    fidelity: FidelityReport


@dataclass
class RoundHistory:
    records: list[RoundRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def append(self, rec: RoundRecord):
        expected = len(self.records) + 1
        if rec.round != expected:
            raise ValueError(f"round {rec.round} recorded out of order (expected {expected})")
        self.records.append(rec)

    @property
    def f1(self) -> list[float]:
        return [r.fidelity.f1 for r in self.records]

    def digests(self) -> list[str]:
        return [r.digest for r in self.records]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "f1", "tpr", "ppv"])
        for r in self.records:
            w.writerow([r.round, repr(r.fidelity.f1), repr(r.fidelity.tpr), repr(r.fidelity.ppv)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "RoundHistory":
        h = cls()
        for row in csv.DictReader(io.StringIO(text)):
            fr = FidelityReport(float(row["f1"]), float(row["tpr"]), float(row["ppv"]))
            h.append(RoundRecord(int(row["round"]), "", fr))
        return h


class AccessLog:
    """Records which row ids a client touched while computing losses or gradients."""

    def __init__(self):
        self.rows: set[int] = set()
        self.reads = 0

    def record(self, idx: np.ndarray):
        self.reads += 1
        self.rows.update(int(i) for i in idx)


def _batches(rows: np.ndarray, batch_size: int, rng: np.random.Generator):
    perm = rows[rng.permutation(len(rows))]
    return [perm[k : k + batch_size] for k in range(0, len(perm), batch_size)]


def _take(data: Dataset, idx: np.ndarray, access: AccessLog | None) -> Batch:
    if access is not None:
        access.record(idx)
    return Batch(data.x[idx], data.y[idx])


def local_update(
    client: ClientState,
    global_params: ParamVector,
    objective: Objective,
    cfg: FedConfig,
    spec: ModelSpec,
    round_idx: int = 1,
    access: AccessLog | None = None,
) -> tuple[ParamVector, int]:
    """Run local SGD epochs on one client and return (params, sample count).

    Batch order depends only on (shuffle_seed, round, client_id) and the sorted
    row ids, never on the order rows are stored in the shard. The returned
    count is the number of rows that drive the objective (forget rows for
    ascent, retain rows otherwise); 0 means the client sat the round out.
    """
    retain, forget = objective.views(client.indices)
    driver = forget if objective.mode == "ascend" else retain
    if len(driver) == 0:
        return global_params, 0
    rng = np.random.default_rng([cfg.shuffle_seed, round_idx, client.client_id])
    paired = objective.mode in ("diff", "kl") and len(forget) > 0
    p = global_params
    for _ in range(cfg.local_epochs):
        steps = _batches(driver, cfg.batch_size, rng)
        f_steps = []
        if paired:
            # one pass over the forget view per epoch, riding on the first retain steps
            f_size = max(cfg.batch_size, -(-len(forget) // len(steps)))
            f_steps = _batches(forget, f_size, rng)
        for k, idx in enumerate(steps):
            if objective.mode == "ascend":
                pair = (None, _take(client.data, idx, access))
            else:
                fb = _take(client.data, f_steps[k], access) if k < len(f_steps) else None
                pair = (_take(client.data, idx, access), fb)
            _, grad = objective_loss_and_grad(objective, p, spec, pair)
            p = p - cfg.learning_rate * grad
    return p, len(driver)


def fedavg_aggregate(updates) -> ParamVector:
    """Sample-count-weighted mean of client parameter vectors."""
    updates = list(updates)
    if not updates:
        raise ValueError("no client updates to aggregate")
    layout = updates[0][0].layout
    if any(p.layout != layout for p, _ in updates):
        raise ValueError("client updates have mismatched layouts")
    counts = np.array([n for _, n in updates], dtype=np.float64)
    if np.any(counts < 0) or counts.sum() <= 0:
        raise ValueError("sample counts must be non-negative with a positive total")
    weights = counts / counts.sum()
    stacked = np.stack([p.values for p, _ in updates])
    return ParamVector(weights @ stacked, layout)


def evaluate(p: ParamVector, spec: ModelSpec, eval_set: Dataset) -> FidelityReport:
    return fidelity(confusion(classify(p, spec, eval_set.x), eval_set.y))


def run_federated(
    clients: list[ClientState],
    spec: ModelSpec,
    init: ParamVector,
    objective: Objective,
    cfg: FedConfig,
    eval_set: Dataset,
    access: AccessLog | None = None,
) -> tuple[ParamVector, RoundHistory]:
    if not clients:
        raise ValueError("need at least one client")
    params, history = init, RoundHistory()
    for rnd in range(1, cfg.n_rounds + 1):
        # clients are independent within a round; the server only sees (params, count)
        updates = [local_update(c, params, objective, cfg, spec, rnd, access) for c in clients]
        updates = [(p, n) for p, n in updates if n > 0]
        if updates:
            params = fedavg_aggregate(updates)
        else:
            log.warning("round %d: no client had rows for objective %r", rnd, objective.mode)
        history.append(RoundRecord(rnd, params.digest(), evaluate(params, spec, eval_set)))
    return params, history
