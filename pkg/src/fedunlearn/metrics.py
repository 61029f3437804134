"""Fidelity, certifiability and efficiency metrics."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class FidelityReport:
    f1: float
    tpr: float
    ppv: float


@dataclass(frozen=True)
class CertifiabilityScore:
    residual_norm: float
    eval_set_kind: Literal["full_data", "forget_set"] = "forget_set"


@dataclass(frozen=True)
class RunSummary:
    mean: float
    std: float
    n_runs: int


def confusion(preds, labels) -> ConfusionCounts:
    preds = np.asarray(preds).astype(bool)
    labels = np.asarray(labels).astype(bool)
    if preds.shape != labels.shape or preds.ndim != 1:
        raise ValueError("preds and labels must be 1-d vectors of equal length")
    if len(preds) == 0:
        raise ValueError("need at least one prediction")
    return ConfusionCounts(
        tp=int(np.sum(preds & labels)),
        fp=int(np.sum(preds & ~labels)),
        tn=int(np.sum(~preds & ~labels)),
        fn=int(np.sum(~preds & labels)),
    )


def _ratio(a: int, b: int) -> float:
    return a / b if b else 0.0


def fidelity(counts: ConfusionCounts) -> FidelityReport:
    """PPV, TPR and F1; any 0/0 term is taken as 0."""
    ppv = _ratio(counts.tp, counts.tp + counts.fp)
    tpr = _ratio(counts.tp, counts.tp + counts.fn)
    f1 = 2 * ppv * tpr / (ppv + tpr) if ppv + tpr > 0 else 0.0
    return FidelityReport(f1=f1, tpr=tpr, ppv=ppv)


def residual_norm(unlearned_probs, retrain_probs, eval_set_kind="forget_set") -> CertifiabilityScore:
    """RMS difference between two models' probabilities on the same rows."""
    u = np.asarray(unlearned_probs, dtype=np.float64)
    r = np.asarray(retrain_probs, dtype=np.float64)
    if u.shape != r.shape or u.ndim != 1 or len(u) == 0:
        raise ValueError("probability vectors must be 1-d, non-empty and of equal length")
    return CertifiabilityScore(float(np.sqrt(np.mean((u - r) ** 2))), eval_set_kind)


def rounds_to_convergence(history, epsilon: float = 0.02, patience: int = 5) -> int:
    """First round (1-based) from which `patience` consecutive F1 values stay
    within `epsilon` of the final F1.

    `history` is a RoundHistory or a plain F1 sequence. Windows are truncated
    at the end of the curve, so the result never exceeds the number of rounds.
    """
    f = np.asarray(getattr(history, "f1", history), dtype=np.float64)
    if len(f) == 0:
        raise ValueError("empty history")
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    close = np.abs(f - f[-1]) <= epsilon
    for r in range(len(f)):
        if close[r : r + patience].all():
            return r + 1
    return len(f)


def summarize_runs(values: Sequence[float]) -> tuple[float, float]:
    """Mean and sample standard deviation."""
    v = [float(x) for x in values]
    if not v:
        raise ValueError("no values to summarise")
    mean = math.fsum(v) / len(v)
    if len(v) == 1:
        log.warning("single run: reporting std 0")
        return mean, 0.0
    var = math.fsum((x - mean) ** 2 for x in v) / (len(v) - 1)
    return mean, math.sqrt(var)
