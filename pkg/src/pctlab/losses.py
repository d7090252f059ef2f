"""Training objectives for congruence-aware model updates.

The total objective is ``CE + lambda * PC`` where the PC (positive
congruence) term penalizes drifting away from a frozen reference model:

* ``naive``  - cross-entropy re-weighted on samples the reference got right,
  i.e. those samples count ``1 + lambda`` times.
* ``focal``  - a distillation distance (temperature-scaled KL or half squared
  logit distance) weighted per sample by ``alpha + beta * [reference correct]``.

Per-sample functions return ``(value, gradient w.r.t. new logits)``; the
batch objective factories fold in the batch mean and are what ``nn.train``
consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .nn import DimensionError, MLPModel, batch_logits

DISTANCE_KINDS = ("kl", "logit_match")
PC_MODES = ("none", "naive", "focal")


@dataclass(frozen=True)
class FilterSpec:
    """Per-sample weight: ``alpha`` always, plus ``beta`` when the reference
    model classified the sample correctly."""

    alpha: float = 1.0
    beta: float = 5.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("filter weights must be non-negative")


@dataclass(frozen=True)
class DistanceSpec:
    kind: str = "logit_match"
    tau: float = 100.0

    def __post_init__(self):
        if self.kind not in DISTANCE_KINDS:
            raise ValueError(f"unknown distance kind {self.kind!r}")
        if self.tau <= 0:
            raise ValueError("tau must be positive")


@dataclass(frozen=True)
class PCLossConfig:
    mode: str = "none"
    lam: float = 1.0
    filter: FilterSpec = field(default_factory=FilterSpec)
    distance: DistanceSpec = field(default_factory=DistanceSpec)

    def __post_init__(self):
        if self.mode not in PC_MODES:
            raise ValueError(f"unknown PC mode {self.mode!r}")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")


@dataclass(frozen=True)
class OracleEntry:
    """Reference-model cache for one training sample."""

    old_logits: np.ndarray
    old_correct: bool
    logit_index: np.ndarray  # positions of the reference classes in the new logit vector


class OldModelOracle:
    """Frozen reference-model outputs over a training set.

    Caches the reference logits and per-sample correctness flags once, so
    training never re-evaluates the old model. When the new model has more
    classes, ``logit_index`` records where each reference class sits in the
    new logit vector (identity when the label spaces coincide).
    """

    def __init__(self, logits: np.ndarray, old_correct: np.ndarray,
                 old_pred: np.ndarray, logit_index: Optional[np.ndarray] = None):
        self.logits = np.ascontiguousarray(logits, dtype=np.float64)
        self.old_correct = np.asarray(old_correct, dtype=bool)
        self.old_pred = np.asarray(old_pred, dtype=np.int64)
        if logit_index is None:
            logit_index = np.arange(self.logits.shape[1], dtype=np.int64)
        self.logit_index = np.asarray(logit_index, dtype=np.int64)
        n = self.logits.shape[0]
        if self.old_correct.shape != (n,) or self.old_pred.shape != (n,):
            raise DimensionError("oracle arrays must align with the logit rows")
        if self.logit_index.shape != (self.logits.shape[1],):
            raise DimensionError("logit_index must have one entry per reference class")
        for arr in (self.logits, self.old_correct, self.old_pred, self.logit_index):
            arr.setflags(write=False)

    @classmethod
    def from_model(cls, model: MLPModel, features: np.ndarray, labels: np.ndarray,
                   class_map: Optional[np.ndarray] = None) -> "OldModelOracle":
        """Evaluate a reference model once over ``features``.

        ``class_map[j]`` is the label (in the evaluation label space) that the
        reference model's class j denotes; identity when omitted.
        """
        labels = np.asarray(labels, dtype=np.int64)
        logits = batch_logits(model, features)
        preds = kernels.argmax_rows(logits)
        if class_map is not None:
            class_map = np.asarray(class_map, dtype=np.int64)
            pred_labels = class_map[preds]
        else:
            pred_labels = preds
        return cls(logits, pred_labels == labels, pred_labels, class_map)

    def __len__(self) -> int:
        return self.logits.shape[0]

    def entry(self, i: int) -> OracleEntry:
        if not 0 <= i < len(self):
            raise IndexError(f"no oracle entry for sample {i}")
        return OracleEntry(self.logits[i], bool(self.old_correct[i]), self.logit_index)


def filter_weight(spec: FilterSpec, old_correct: bool) -> float:
    return spec.alpha + spec.beta if old_correct else spec.alpha


def _log_softmax_rows(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=1, keepdims=True)
    return x - m - np.log(np.exp(x - m).sum(axis=1, keepdims=True))


def distance_kl(new_logits: np.ndarray, old_logits: np.ndarray,
                tau: float) -> tuple:
    """KL between the tau-softened reference and new distributions.

    Value is KL(softmax(old/tau) || softmax(new/tau)); the reference side is
    the target distribution. Returns (value, gradient w.r.t. new logits).
    """
    new_logits = np.asarray(new_logits, dtype=np.float64)
    old_logits = np.asarray(old_logits, dtype=np.float64)
    if new_logits.shape != old_logits.shape:
        raise DimensionError("logit vectors must have equal length")
    if tau <= 0:
        raise ValueError("tau must be positive")
    ls_new = _log_softmax_rows(new_logits[None, :] / tau)[0]
    ls_old = _log_softmax_rows(old_logits[None, :] / tau)[0]
    p_old = np.exp(ls_old)
    value = float(np.dot(p_old, ls_old - ls_new))
    grad = (np.exp(ls_new) - p_old) / tau
    return max(value, 0.0), grad


def distance_lm(new_logits: np.ndarray, old_logits: np.ndarray) -> tuple:
    """Half squared Euclidean distance between logit vectors; gradient is
    simply (new - old)."""
    new_logits = np.asarray(new_logits, dtype=np.float64)
    old_logits = np.asarray(old_logits, dtype=np.float64)
    if new_logits.shape != old_logits.shape:
        raise DimensionError("logit vectors must have equal length")
    diff = new_logits - old_logits
    return 0.5 * float(np.dot(diff, diff)), diff


def _ce_value_grad(logits: np.ndarray, label: int) -> tuple:
    logits = np.ascontiguousarray(logits, dtype=np.float64)
    if not 0 <= label < logits.shape[0]:
        raise IndexError(f"label {label} out of range")
    losses, probs = kernels.ce_rows(logits[None, :], np.array([label], dtype=np.int64))
    grad = probs[0]
    grad[label] -= 1.0
    return float(losses[0]), grad


def pc_loss_naive(new_logits: np.ndarray, label: int, old_correct: bool) -> tuple:
    """Cross-entropy gated on the reference model being correct."""
    if not old_correct:
        return 0.0, np.zeros(np.asarray(new_logits).shape[0])
    return _ce_value_grad(new_logits, label)


def pc_loss_focal(new_logits: np.ndarray, entry: OracleEntry,
                  filt: FilterSpec, dist: DistanceSpec) -> tuple:
    """Filter-weighted distillation distance to the reference logits.

    With more new classes than reference classes, the distance only sees the
    logits at ``entry.logit_index``; the gradient is zero elsewhere.
    """
    new_logits = np.asarray(new_logits, dtype=np.float64)
    sub = new_logits[entry.logit_index]
    if dist.kind == "kl":
        value, sub_grad = distance_kl(sub, entry.old_logits, dist.tau)
    else:
        value, sub_grad = distance_lm(sub, entry.old_logits)
    weight = filter_weight(filt, entry.old_correct)
    grad = np.zeros_like(new_logits)
    grad[entry.logit_index] = weight * sub_grad
    return weight * value, grad


def total_objective(new_logits: np.ndarray, label: int, entry: OracleEntry,
                    config: PCLossConfig) -> tuple:
    """Per-sample CE + lambda * PC term, with gradient w.r.t. new logits."""
    ce, grad = _ce_value_grad(new_logits, label)
    if config.mode == "none":
        return ce, grad
    if config.mode == "naive":
        pc, pc_grad = pc_loss_naive(new_logits, label, entry.old_correct)
    else:
        pc, pc_grad = pc_loss_focal(new_logits, entry, config.filter, config.distance)
    return ce + config.lam * pc, grad + config.lam * pc_grad


# ---------------------------------------------------------------------------
# batch objective factories (vectorized; consumed by nn.train)


def make_ce_objective(labels: np.ndarray):
    """Plain mean cross-entropy over the batch."""
    labels = np.ascontiguousarray(labels, dtype=np.int64)

    def objective(logits, idx):
        y = labels[idx]
        losses, probs = kernels.ce_rows(logits, y)
        b = logits.shape[0]
        dlogits = probs
        dlogits[np.arange(b), y] -= 1.0
        dlogits /= b
        return float(losses.mean()), dlogits

    return objective


def make_objective(labels: np.ndarray, oracle: Optional[OldModelOracle],
                   config: PCLossConfig):
    """Batch-mean of the per-sample total objective.

    Equals ``mean_i [CE_i + lambda * PC_i]``; with ``mode="none"`` this is
    exactly the plain CE objective.
    """
    if config.mode == "none":
        return make_ce_objective(labels)
    if oracle is None:
        raise ValueError(f"PC mode {config.mode!r} needs a reference-model oracle")
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    lam = config.lam

    if config.mode == "naive":

        def objective(logits, idx):
            y = labels[idx]
            losses, probs = kernels.ce_rows(logits, y)
            b = logits.shape[0]
            w = 1.0 + lam * oracle.old_correct[idx]
            loss = float(np.mean(w * losses))
            dlogits = probs
            dlogits[np.arange(b), y] -= 1.0
            dlogits *= (w / b)[:, None]
            return loss, dlogits

        return objective

    filt, dist = config.filter, config.distance
    logit_index = oracle.logit_index

    def objective(logits, idx):
        y = labels[idx]
        losses, probs = kernels.ce_rows(logits, y)
        b = logits.shape[0]
        sub = np.ascontiguousarray(logits[:, logit_index])
        old = oracle.logits[idx]
        if dist.kind == "kl":
            ls_new = _log_softmax_rows(sub / dist.tau)
            ls_old = _log_softmax_rows(old / dist.tau)
            p_old = np.exp(ls_old)
            d = np.maximum((p_old * (ls_old - ls_new)).sum(axis=1), 0.0)
            sub_grad = (np.exp(ls_new) - p_old) / dist.tau
        else:
            diff = sub - old
            d = 0.5 * (diff * diff).sum(axis=1)
            sub_grad = diff
        f = filt.alpha + filt.beta * oracle.old_correct[idx]
        loss = float(losses.mean() + lam * np.mean(f * d))
        dlogits = probs
        dlogits[np.arange(b), y] -= 1.0
        dlogits /= b
        dlogits[:, logit_index] += (lam / b) * f[:, None] * sub_grad
        return loss, dlogits

    return objective
