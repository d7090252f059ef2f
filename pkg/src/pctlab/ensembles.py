"""Independently trained model ensembles with logit averaging.

An ensemble predicts through the softmax of the arithmetic mean of member
logits. Members are trained under plain cross-entropy from consecutive
seeds, so ensembles are reproducible and two ensembles built from disjoint
seed ranges are independent.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .datasets import SPLIT_TEST, SPLIT_TRAIN, Dataset
from .flips import report_from_arrays
from .losses import make_ce_objective
from .nn import MLPModel, TrainConfig, batch_logits, init_model, train, with_seed


@dataclass
class Ensemble:
    members: List[MLPModel]

    def __post_init__(self):
        if not self.members:
            raise ValueError("ensemble needs at least one member")
        dim = self.members[0].input_dim
        k = self.members[0].num_classes
        for m in self.members[1:]:
            if m.input_dim != dim or m.num_classes != k:
                raise ValueError("members must share input_dim and class count")

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def num_classes(self) -> int:
        return self.members[0].num_classes

    def logits_batch(self, x: np.ndarray) -> np.ndarray:
        stacked = np.stack([batch_logits(m, x) for m in self.members])
        return stacked.mean(axis=0)

    def predict_batch(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits_batch(x), axis=1)

    def parameter_count(self) -> int:
        return sum(m.parameter_count() for m in self.members)


def ensemble_logits(ensemble: Ensemble, x: np.ndarray) -> np.ndarray:
    """Mean member logits for one sample; argmax of this is the ensemble
    prediction (softmax afterwards does not change the argmax)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a single feature vector")
    return ensemble.logits_batch(x[None, :])[0]


def _train_member(dims, features, labels, config: TrainConfig, seed: int) -> MLPModel:
    model = init_model(dims, seed, weight_init=config.weight_init)
    objective = make_ce_objective(labels)
    return train(model, features, labels, objective, with_seed(config, seed)).model


def train_ensemble(dims: Sequence[int], features: np.ndarray, labels: np.ndarray,
                   config: TrainConfig, size: int, base_seed: int,
                   max_workers: int = 1) -> Ensemble:
    """Train ``size`` members under plain CE; member j uses seed base_seed + j.

    Members are independent, so concurrent training (max_workers > 1) yields
    bit-identical results to sequential execution.
    """
    if size < 1:
        raise ValueError("ensemble size must be >= 1")
    seeds = [base_seed + j for j in range(size)]
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            members = list(pool.map(
                lambda s: _train_member(dims, features, labels, config, s), seeds))
    else:
        members = [_train_member(dims, features, labels, config, s) for s in seeds]
    return Ensemble(members)


@dataclass(frozen=True)
class SweepRow:
    size: int
    er_old: float
    er_new: float
    nfr: float
    rel_nfr: Optional[float]


@dataclass
class SweepResult:
    rows: List[SweepRow]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["L", "er_old", "er_new", "nfr", "rel_nfr"])
        for r in self.rows:
            writer.writerow([r.size, repr(r.er_old), repr(r.er_new), repr(r.nfr),
                             "" if r.rel_nfr is None else repr(r.rel_nfr)])
        return buf.getvalue()


def sweep_ensemble_size(old_dims: Sequence[int], new_dims: Sequence[int],
                        dataset: Dataset, config: TrainConfig,
                        sizes: Sequence[int], old_base_seed: int,
                        new_base_seed: int, max_workers: int = 1) -> SweepResult:
    """Flip metrics between old and new ensembles for each requested size.

    Trains max(sizes) members per side once and evaluates every size L on
    the first L members, which is exactly the ensemble train_ensemble would
    produce for that L. Seed ranges for the two sides must not overlap.
    """
    sizes = [int(s) for s in sizes]
    if not sizes or sizes != sorted(sizes) or sizes[0] < 1:
        raise ValueError("sizes must be ascending and >= 1")
    top = sizes[-1]
    if abs(old_base_seed - new_base_seed) < top:
        raise ValueError("old and new seed ranges overlap")

    train_x = dataset.features[dataset.rows_of_split(SPLIT_TRAIN)]
    train_y = dataset.labels[dataset.rows_of_split(SPLIT_TRAIN)]
    test_x = dataset.features[dataset.rows_of_split(SPLIT_TEST)]
    test_y = dataset.labels[dataset.rows_of_split(SPLIT_TEST)]

    old_ens = train_ensemble(old_dims, train_x, train_y, config, top,
                             old_base_seed, max_workers)
    new_ens = train_ensemble(new_dims, train_x, train_y, config, top,
                             new_base_seed, max_workers)
    old_logits = np.cumsum([batch_logits(m, test_x) for m in old_ens.members], axis=0)
    new_logits = np.cumsum([batch_logits(m, test_x) for m in new_ens.members], axis=0)

    rows = []
    for size in sizes:
        old_preds = np.argmax(old_logits[size - 1] / size, axis=1)
        new_preds = np.argmax(new_logits[size - 1] / size, axis=1)
        report = report_from_arrays(test_y, old_preds, new_preds)
        rows.append(SweepRow(size, report.er_old, report.er_new, report.nfr,
                             report.rel_nfr))
    return SweepResult(rows)
