"""Synthetic Gaussian-cluster classification data and immutable views.

One isotropic Gaussian cluster per class, stratified 70/10/20
train/validation/test split, optional uniform resampling of a fraction of
the train labels. Views narrow the visible rows (per-class subsampling of
the train split, or a class subset with contiguous relabeling) without ever
mutating the underlying arrays.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .rng import STREAM_DATA, STREAM_NOISE, STREAM_SUBSET, stream_rng

SPLIT_TRAIN = 0
SPLIT_VALIDATION = 1
SPLIT_TEST = 2
SPLIT_NAMES = {SPLIT_TRAIN: "train", SPLIT_VALIDATION: "validation",
               SPLIT_TEST: "test"}
SPLIT_CODES = {name: code for code, name in SPLIT_NAMES.items()}


class DegenerateSpecError(ValueError):
    """The spec cannot yield a usable dataset (e.g. a class with no train rows)."""


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian-cluster task. Defaults are the reference task; the spread
    was calibrated once so plain CE training of the small reference model
    lands at 15-30% test error (flips need errors to exist)."""

    num_classes: int = 10
    input_dim: int = 20
    samples_per_class: int = 500
    cluster_spread: float = 1.6
    class_center_scale: float = 1.0
    label_noise: float = 0.05
    seed: int = 7

    def __post_init__(self):
        if self.num_classes < 2:
            raise DegenerateSpecError("need at least 2 classes")
        if self.samples_per_class < 2:
            raise DegenerateSpecError("need at least 2 samples per class")
        if self.input_dim < 1:
            raise DegenerateSpecError("input_dim must be >= 1")
        if self.cluster_spread <= 0 or self.class_center_scale <= 0:
            raise DegenerateSpecError("spread and center scale must be positive")
        if not 0.0 <= self.label_noise < 1.0:
            raise DegenerateSpecError("label_noise must be in [0, 1)")
        if self.seed < 0:
            raise DegenerateSpecError("seed must be non-negative")


@dataclass
class Dataset:
    features: np.ndarray  # (n, input_dim) float64
    labels: np.ndarray    # (n,) int64
    split: np.ndarray     # (n,) uint8 codes, see SPLIT_NAMES
    num_classes: int

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        self.split = np.ascontiguousarray(self.split, dtype=np.uint8)
        n = self.features.shape[0]
        if self.labels.shape != (n,) or self.split.shape != (n,):
            raise ValueError("features, labels and split tags must align")
        if not np.isin(self.split, list(SPLIT_NAMES)).all():
            raise ValueError("unknown split codes present")
        if self.labels.min(initial=0) < 0 or self.labels.max(initial=0) >= self.num_classes:
            raise ValueError("labels out of range")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def rows_of_split(self, code: int) -> np.ndarray:
        return np.flatnonzero(self.split == code)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"f{j}" for j in range(self.input_dim)]
                        + ["label", "split"])
        for i in range(self.n):
            writer.writerow([repr(float(v)) for v in self.features[i]]
                            + [int(self.labels[i]), SPLIT_NAMES[int(self.split[i])]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, num_classes: Optional[int] = None) -> "Dataset":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        dim = len(header) - 2
        feats, labels, split = [], [], []
        for row in reader:
            feats.append([float(v) for v in row[:dim]])
            labels.append(int(row[dim]))
            split.append(SPLIT_CODES[row[dim + 1]])
        labels = np.array(labels, dtype=np.int64)
        if num_classes is None:
            num_classes = int(labels.max()) + 1
        return cls(np.array(feats), labels, np.array(split, dtype=np.uint8),
                   num_classes)


def generate(spec: SyntheticSpec) -> Dataset:
    """Draw the dataset for a spec; identical specs yield identical datasets.

    Rows are grouped by generating class; within each class the first 70%
    are tagged train, the next 10% validation, the rest test (the draws are
    i.i.d., so the positional split is already random). Label noise then
    resamples a fraction of the train labels uniformly over all classes.
    """
    k, d, spc = spec.num_classes, spec.input_dim, spec.samples_per_class
    rng = stream_rng(spec.seed, STREAM_DATA)
    centers = spec.class_center_scale * rng.standard_normal((k, d))
    features = np.empty((k * spc, d))
    labels = np.empty(k * spc, dtype=np.int64)
    split = np.empty(k * spc, dtype=np.uint8)
    n_train = int(spc * 0.7)
    n_val = int(spc * 0.1)
    for c in range(k):
        block = slice(c * spc, (c + 1) * spc)
        features[block] = centers[c] + spec.cluster_spread * rng.standard_normal((spc, d))
        labels[block] = c
        split[block] = SPLIT_TEST
        split[c * spc:c * spc + n_train] = SPLIT_TRAIN
        split[c * spc + n_train:c * spc + n_train + n_val] = SPLIT_VALIDATION

    if spec.label_noise > 0.0:
        noise_rng = stream_rng(spec.seed, STREAM_NOISE)
        train_rows = np.flatnonzero(split == SPLIT_TRAIN)
        n_noisy = int(round(spec.label_noise * train_rows.size))
        picked = noise_rng.choice(train_rows, size=n_noisy, replace=False)
        labels[picked] = noise_rng.integers(0, k, size=n_noisy)

    dataset = Dataset(features, labels, split, k)
    train_labels = dataset.labels[dataset.rows_of_split(SPLIT_TRAIN)]
    if np.unique(train_labels).size < k:
        raise DegenerateSpecError("a class has no training samples after noise")
    return dataset


@dataclass(frozen=True)
class DatasetView:
    """A read-only row/label window onto a dataset.

    ``class_subset`` (sorted original labels) defines the view's contiguous
    label space: view label j means original label class_subset[j]. Sample
    ids are always base row indices, so views taken from the same dataset
    can be compared sample-by-sample.
    """

    base: Dataset
    rows: np.ndarray
    class_subset: Optional[np.ndarray] = None

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        object.__setattr__(self, "rows", rows)
        rows.setflags(write=False)
        if self.class_subset is not None:
            subset = np.asarray(self.class_subset, dtype=np.int64)
            object.__setattr__(self, "class_subset", subset)
            subset.setflags(write=False)

    @property
    def num_classes(self) -> int:
        if self.class_subset is None:
            return self.base.num_classes
        return int(self.class_subset.size)

    def label_map(self) -> np.ndarray:
        """view label -> original label (identity when no subset)."""
        if self.class_subset is None:
            return np.arange(self.base.num_classes, dtype=np.int64)
        return self.class_subset

    def split_rows(self, code: int) -> np.ndarray:
        return self.rows[self.base.split[self.rows] == code]

    def features(self, code: int) -> np.ndarray:
        return self.base.features[self.split_rows(code)]

    def labels(self, code: int) -> np.ndarray:
        raw = self.base.labels[self.split_rows(code)]
        if self.class_subset is None:
            return raw
        inverse = np.full(self.base.num_classes, -1, dtype=np.int64)
        inverse[self.class_subset] = np.arange(self.class_subset.size)
        return inverse[raw]

    def sample_ids(self, code: int) -> np.ndarray:
        return self.split_rows(code)


def full_view(dataset: Dataset) -> DatasetView:
    return DatasetView(dataset, np.arange(dataset.n, dtype=np.int64))


def _as_view(data: Union[Dataset, DatasetView]) -> DatasetView:
    return data if isinstance(data, DatasetView) else full_view(data)


def half_samples_view(data: Union[Dataset, DatasetView], fraction: float,
                      seed: int) -> DatasetView:
    """Keep a per-class stratified fraction of the train split.

    Validation and test rows pass through untouched, so old/new jobs built
    from different fractions still share the evaluation splits exactly.
    """
    view = _as_view(data)
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    if fraction == 1.0:
        return view
    rng = stream_rng(seed, STREAM_SUBSET)
    train_rows = view.split_rows(SPLIT_TRAIN)
    train_labels = view.base.labels[train_rows]
    kept = []
    for c in np.unique(train_labels):
        rows_c = train_rows[train_labels == c]
        n_keep = int(fraction * rows_c.size)
        if n_keep < 1:
            raise ValueError(f"fraction {fraction} leaves class {int(c)} empty")
        kept.append(np.sort(rng.permutation(rows_c)[:n_keep]))
    other = view.rows[view.base.split[view.rows] != SPLIT_TRAIN]
    rows = np.sort(np.concatenate(kept + [other]))
    return DatasetView(view.base, rows, view.class_subset)


def half_classes_view(data: Union[Dataset, DatasetView],
                      class_subset) -> DatasetView:
    """Restrict to the given classes with contiguous, order-preserving relabeling."""
    view = _as_view(data)
    if view.class_subset is not None:
        raise ValueError("view already restricted to a class subset")
    subset = np.unique(np.asarray(class_subset, dtype=np.int64))
    if subset.size == 0:
        raise ValueError("class subset must be nonempty")
    if subset.min() < 0 or subset.max() >= view.base.num_classes:
        raise ValueError("class subset out of range")
    keep = view.rows[np.isin(view.base.labels[view.rows], subset)]
    if subset.size == view.base.num_classes:
        return DatasetView(view.base, keep, None)
    return DatasetView(view.base, keep, subset)
