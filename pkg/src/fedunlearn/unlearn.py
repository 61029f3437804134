"""Unlearning scenarios and algorithms on top of the FedAvg simulator."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset, SplitPlan, zero_feature
from .fedsim import AccessLog, ClientState, FedConfig, RoundHistory, run_federated
from .model import ModelSpec, ParamVector, init_params
from .objectives import Objective, objective_loss_and_grad

__all__ = [
    "Feature", "Rows", "UnlearnTask", "World", "Objective", "objective_loss_and_grad",
    "train_original", "run_retrain", "run_finetune_feature", "run_unlearn_rows",
    "FEATURE_ALGORITHMS", "ROW_ALGORITHMS",
]

log = logging.getLogger(__name__)

FEATURE_ALGORITHMS = ("retrain", "finetune")
ROW_ALGORITHMS = ("retrain", "grad_ascent", "grad_diff", "kl_min")
_ROW_MODES = {"grad_ascent": "ascend", "grad_diff": "diff", "kl_min": "kl"}


@dataclass(frozen=True)
class Feature:
    name: str


@dataclass(frozen=True, eq=False)
class Rows:
    forget_idx: np.ndarray
    rate: float


@dataclass(frozen=True, eq=False)
class UnlearnTask:
    scenario: Feature | Rows
    algorithm: str
    budget_rounds: int
    seed: int = 0

    def __post_init__(self):
        allowed = FEATURE_ALGORITHMS if isinstance(self.scenario, Feature) else ROW_ALGORITHMS
        if self.algorithm not in allowed:
            kind = "feature" if isinstance(self.scenario, Feature) else "rows"
            raise ValueError(f"algorithm {self.algorithm!r} does not apply to the {kind} scenario")
        if self.budget_rounds < 0:
            raise ValueError("budget_rounds must be >= 0")


@dataclass(frozen=True, eq=False)
class World:
    """Preprocessed table, split plan and model architecture for one run."""

    data: Dataset
    plan: SplitPlan
    spec: ModelSpec

    @property
    def test(self) -> Dataset:
        return self.data.subset(self.plan.test_idx)

    def clients(self, data: Dataset | None = None, drop: np.ndarray | None = None) -> list[ClientState]:
        data = self.data if data is None else data
        out = []
        for cid, idx in self.plan.client_assignment.items():
            if drop is not None:
                idx = idx[~np.isin(idx, drop)]
            if len(idx) == 0:
                log.warning("client %d has no rows left and drops out", cid)
                continue
            out.append(ClientState(cid, data, idx))
        return out


def train_original(world: World, cfg: FedConfig, access: AccessLog | None = None):
    """The model unlearning starts from: trained on every training row."""
    return run_federated(
        world.clients(), world.spec, init_params(world.spec), Objective("descend"), cfg, world.test, access
    )


def run_retrain(task: UnlearnTask, world: World, cfg: FedConfig, access: AccessLog | None = None):
    """Train from a fresh init without the forgotten data, for the full n_rounds."""
    if task.algorithm != "retrain":
        raise ValueError("run_retrain needs a retrain task")
    init = init_params(world.spec)
    if isinstance(task.scenario, Feature):
        data = zero_feature(world.data, task.scenario.name)
        clients = world.clients(data)
        eval_set = data.subset(world.plan.test_idx)
    else:
        clients = world.clients(drop=task.scenario.forget_idx)
        eval_set = world.test
    if not clients:
        raise ValueError("every client lost all of its rows")
    return run_federated(clients, world.spec, init, Objective("descend"), cfg, eval_set, access)


def run_finetune_feature(trained: ParamVector, task: UnlearnTask, world: World, cfg: FedConfig,
                         access: AccessLog | None = None):
    """Keep training `trained` on the zeroed data for the task's round budget."""
    if not isinstance(task.scenario, Feature) or task.algorithm != "finetune":
        raise ValueError("run_finetune_feature needs a feature-scenario finetune task")
    if trained.layout != world.spec.layout():
        raise ValueError("trained parameters do not match the model spec")
    data = zero_feature(world.data, task.scenario.name)
    ft_cfg = replace(cfg, n_rounds=task.budget_rounds, shuffle_seed=task.seed)
    return run_federated(world.clients(data), world.spec, trained, Objective("descend"), ft_cfg,
                         data.subset(world.plan.test_idx), access)


def run_unlearn_rows(
    trained: ParamVector,
    task: UnlearnTask,
    world: World,
    cfg: FedConfig,
    ascent_lr_scale: float = 0.1,
    kl_weight: float = 1.0,
    access: AccessLog | None = None,
) -> tuple[ParamVector, RoundHistory]:
    """Gradient ascent, gradient difference or KL minimisation from `trained`.

    All three objectives contain an ascent term, so they run at
    ``ascent_lr_scale`` times the training learning rate.
    """
    if not isinstance(task.scenario, Rows) or task.algorithm not in _ROW_MODES:
        raise ValueError("run_unlearn_rows needs a rows-scenario gradient task")
    forget = task.scenario.forget_idx
    if len(forget) == 0:
        raise ValueError("forget set is empty")
    mode = _ROW_MODES[task.algorithm]
    obj = Objective(mode, forget_idx=forget, reference_params=trained if mode == "kl" else None,
                    kl_weight=kl_weight)
    ul_cfg = replace(cfg, n_rounds=task.budget_rounds, shuffle_seed=task.seed,
                     learning_rate=cfg.learning_rate * ascent_lr_scale)
    return run_federated(world.clients(), world.spec, trained, obj, ul_cfg, world.test, access)
