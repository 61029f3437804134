"""Training and unlearning objectives evaluated on one client step."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .model import Batch, ModelSpec, ParamVector, bce_loss_and_grad, predict_proba, soft_ce_loss_and_grad

Mode = Literal["descend", "ascend", "diff", "kl"]
MODES = ("descend", "ascend", "diff", "kl")


@dataclass(frozen=True, eq=False)
class Objective:
    """What a client optimises during one local update.

    ``forget_idx`` holds global row ids; each client intersects it with its own
    shard, so the retain view is the shard minus those rows.
    """

    mode: Mode = "descend"
    forget_idx: np.ndarray | None = None
    reference_params: ParamVector | None = None
    kl_weight: float = 1.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown objective mode {self.mode!r}")
        if self.mode in ("ascend", "diff", "kl") and (self.forget_idx is None or len(self.forget_idx) == 0):
            raise ValueError(f"mode {self.mode!r} requires a non-empty forget set")
        if self.mode == "kl" and self.reference_params is None:
            raise ValueError("kl mode requires reference parameters")
        if self.kl_weight < 0:
            raise ValueError("kl_weight must be >= 0")
        if self.forget_idx is not None:
            object.__setattr__(self, "forget_idx", np.unique(np.asarray(self.forget_idx, dtype=np.int64)))

    def views(self, shard: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(retain, forget) row ids for one client shard, both sorted."""
        shard = np.unique(np.asarray(shard, dtype=np.int64))
        if self.forget_idx is None:
            return shard, shard[:0]
        mask = np.isin(shard, self.forget_idx)
        return shard[~mask], shard[mask]

    def driver(self, shard: np.ndarray) -> np.ndarray:
        """Rows whose batches set the number of SGD steps."""
        retain, forget = self.views(shard)
        return forget if self.mode == "ascend" else retain


def objective_loss_and_grad(
    obj: Objective,
    p: ParamVector,
    spec: ModelSpec,
    batches: tuple[Batch | None, Batch | None],
) -> tuple[float, ParamVector]:
    retain, forget = batches
    zero = p.with_values(np.zeros(len(p)))
    if obj.mode == "ascend":
        if forget is None:
            raise ValueError("ascend needs a forget batch")
        loss, grad = bce_loss_and_grad(p, spec, forget)
        return -loss, -grad
    if retain is None:
        raise ValueError(f"{obj.mode} needs a retain batch")
    if obj.mode == "descend":
        return bce_loss_and_grad(p, spec, retain)

    if forget is not None:
        f_loss, f_grad = bce_loss_and_grad(p, spec, forget)
    else:
        f_loss, f_grad = 0.0, zero
    if obj.mode == "diff":
        r_loss, r_grad = bce_loss_and_grad(p, spec, retain)
        return r_loss - f_loss, r_grad - f_grad

    ref = obj.reference_params
    if ref.layout != p.layout:
        raise ValueError("reference parameters have a different layout")
    q_ref = predict_proba(ref, spec, retain.x)
    # KL(q_ref || q) = CE(q_ref, q) - H(q_ref); the entropy term has no gradient.
    ce, kl_grad = soft_ce_loss_and_grad(p, spec, retain.x, q_ref)
    entropy = float(-np.mean(q_ref * np.log(q_ref) + (1.0 - q_ref) * np.log(1.0 - q_ref)))
    kl = ce - entropy
    return obj.kl_weight * kl - f_loss, obj.kl_weight * kl_grad - f_grad
