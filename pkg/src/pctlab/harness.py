"""Config-driven experiment runner.

An experiment fixes a synthetic task, an update scenario, a training
schedule, and one update method. Running it trains the old model once,
trains the new model under the method's objective (repeated across seeds),
and records flip metrics per epoch plus a final flip report per repetition.

Update methods
  no_treatment  plain cross-entropy
  naive         cross-entropy re-weighted on samples the old model got right
  fd_kl         focal distillation, softened-KL distance
  fd_lm         focal distillation, squared logit distance
  ensemble      both sides are logit-averaged ensembles trained under CE

Seed layout (relative to the configured base seed)
  base + j                        old model (member j for ensembles)
  base + 1000 + r                 new model, repetition r
  base + 100000 + 1000*r + j      new ensemble member j, repetition r
The ranges stay disjoint for ensemble sizes below 1000, so old and new
models never share an initialisation or shuffle stream.
"""

from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .datasets import SPLIT_TRAIN, Dataset, SyntheticSpec, generate
from .ensembles import SweepResult, sweep_ensemble_size
from .flips import FlipReport, report_from_arrays
from .losses import (FilterSpec, OldModelOracle, PCLossConfig, make_ce_objective,
                     make_objective)
from .nn import (MLPModel, TrainConfig, batch_logits, init_model, predict_batch,
                 train, with_seed)
from .scenarios import (EvalPlan, ScenarioKind, ScenarioPlan, UpdateScenario,
                        build_scenario, reference_scenario)

METHODS = ("no_treatment", "naive", "fd_kl", "fd_lm", "ensemble")

NEW_MODEL_SEED_OFFSET = 1000
ENSEMBLE_SEED_OFFSET = 100_000
ENSEMBLE_REP_STRIDE = 1000


def pc_config_for_method(method: str, base: Optional[PCLossConfig] = None) -> PCLossConfig:
    """PC-loss settings implied by a method name, keeping base hyperparameters."""
    base = base if base is not None else PCLossConfig()
    if method in ("no_treatment", "ensemble"):
        return replace(base, mode="none")
    if method == "naive":
        return replace(base, mode="naive")
    if method == "fd_kl":
        return replace(base, mode="focal",
                       distance=replace(base.distance, kind="kl"))
    if method == "fd_lm":
        return replace(base, mode="focal",
                       distance=replace(base.distance, kind="logit_match"))
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: SyntheticSpec = field(default_factory=SyntheticSpec)
    scenario: UpdateScenario = field(
        default_factory=lambda: reference_scenario(ScenarioKind.SAME_ARCH_RETRAIN))
    train: TrainConfig = field(default_factory=TrainConfig)
    method: str = "no_treatment"
    pc: PCLossConfig = field(default_factory=PCLossConfig)
    ensemble_size: int = 16
    repetitions: int = 1
    output_dir: Optional[str] = None

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not 1 <= self.ensemble_size < ENSEMBLE_REP_STRIDE:
            raise ValueError(f"ensemble_size must be in [1, {ENSEMBLE_REP_STRIDE})")
        # the method determines the PC mode; hyperparameters come from `pc`
        object.__setattr__(self, "pc", pc_config_for_method(self.method, self.pc))


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    er_train: float
    er_val: float
    nfr_val: float
    rel_nfr_val: Optional[float]
    nfr_train: float


@dataclass
class RunArtifacts:
    """One new-model training run: per-epoch series plus the final report."""
    repetition: int
    seed: int
    param_count: int
    epochs: List[EpochMetrics]
    final: FlipReport


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    er_old: float
    old_param_count: int
    runs: List[RunArtifacts]

    def summary(self) -> dict:
        finals = [r.final for r in self.runs]
        return {
            "method": self.config.method,
            "repetitions": len(self.runs),
            "er_old": self.er_old,
            "old_param_count": self.old_param_count,
            "new_param_count": self.runs[0].param_count,
            "er_new": _stats([f.er_new for f in finals]),
            "nfr": _stats([f.nfr for f in finals]),
            "pfr": _stats([f.pfr for f in finals]),
            "rel_nfr": _stats([f.rel_nfr for f in finals]),
        }


def _stats(values: Sequence[Optional[float]]) -> dict:
    if any(v is None for v in values):
        return {"median": None, "min": None, "max": None}
    vals = [float(v) for v in values]
    return {"median": float(statistics.median(vals)),
            "min": min(vals), "max": max(vals)}


@dataclass
class OldReference:
    """Frozen old side of an update: models plus cached predictions."""
    models: List[MLPModel]
    eval_preds: np.ndarray
    er_old: float
    train_preds: np.ndarray
    oracle: Optional[OldModelOracle]
    param_count: int


@dataclass
class ScenarioState:
    """Shared per-scenario work: the dataset, the plan, and the old side.

    Passing one state to several run_experiment calls guarantees every
    method is scored against the bit-identical old model.
    """
    dataset: Dataset
    plan: ScenarioPlan
    old_single: OldReference
    old_ensembles: Dict[int, OldReference] = field(default_factory=dict)


def _combined_class_map(plan: ScenarioPlan) -> np.ndarray:
    """Map old-model class j to the new model's label for the same class."""
    old_map = np.asarray(plan.eval_plan.old_label_map, dtype=np.int64)
    new_map = np.asarray(plan.eval_plan.new_label_map, dtype=np.int64)
    orig_to_new = {int(orig): i for i, orig in enumerate(new_map)}
    try:
        return np.array([orig_to_new[int(o)] for o in old_map], dtype=np.int64)
    except KeyError:
        raise ValueError("every old class must be present in the new data view")


def _mean_logits(models: Sequence[MLPModel], x: np.ndarray) -> np.ndarray:
    acc = batch_logits(models[0], x)
    for m in models[1:]:
        acc = acc + batch_logits(m, x)
    return acc / len(models)


def _build_old_reference(plan: ScenarioPlan, train_cfg: TrainConfig,
                         members: Optional[int] = None) -> OldReference:
    """Train the old side (one model, or `members` CE-trained models) and
    cache its predictions on the new training view and the eval set."""
    view = plan.old_job.view
    x, y = view.features(SPLIT_TRAIN), view.labels(SPLIT_TRAIN)
    dims = plan.old_job.dims()
    seeds = ([train_cfg.seed] if members is None
             else [train_cfg.seed + j for j in range(members)])
    objective = make_ce_objective(y)
    models = []
    for s in seeds:
        m = init_model(dims, s, weight_init=train_cfg.weight_init)
        models.append(train(m, x, y, objective, with_seed(train_cfg, s)).model)

    combined = _combined_class_map(plan)
    new_view = plan.new_job.view
    xt = new_view.features(SPLIT_TRAIN)
    yt = new_view.labels(SPLIT_TRAIN)
    if members is None:
        oracle = OldModelOracle.from_model(models[0], xt, yt, class_map=combined)
        train_preds = oracle.old_pred
    else:
        oracle = None
        train_preds = combined[np.argmax(_mean_logits(models, xt), axis=1)]

    ep = plan.eval_plan
    old_map = np.asarray(ep.old_label_map, dtype=np.int64)
    eval_preds = old_map[np.argmax(_mean_logits(models, ep.features), axis=1)]
    er_old = float(np.mean(eval_preds != ep.labels))
    return OldReference(models, eval_preds, er_old, train_preds, oracle,
                        sum(m.parameter_count() for m in models))


def prepare_scenario(config: ExperimentConfig) -> ScenarioState:
    """Generate the dataset, resolve the scenario, and train the old model."""
    dataset = generate(config.dataset)
    plan = build_scenario(config.scenario, dataset)
    old = _build_old_reference(plan, config.train)
    return ScenarioState(dataset, plan, old)


class _EpochCollector:
    """Per-epoch train/held-out flip metrics against a fixed old side."""

    def __init__(self, train_x, train_y, old_train_preds, plan: EvalPlan,
                 old_eval_preds):
        self.train_x = train_x
        self.train_y = train_y
        self.old_train_preds = old_train_preds
        self.eval_x = plan.features
        self.eval_y = plan.labels
        self.old_eval_preds = old_eval_preds
        self.new_label_map = np.asarray(plan.new_label_map, dtype=np.int64)
        self.rows: List[EpochMetrics] = []
        self.final: Optional[FlipReport] = None

    def __call__(self, epoch: int, model: MLPModel) -> None:
        self.record(epoch, predict_batch(model, self.train_x),
                    predict_batch(model, self.eval_x))

    def record(self, epoch: int, train_preds: np.ndarray,
               eval_preds_raw: np.ndarray) -> None:
        er_train = float(np.mean(train_preds != self.train_y))
        nfr_train = report_from_arrays(self.train_y, self.old_train_preds,
                                       train_preds).nfr
        eval_preds = self.new_label_map[eval_preds_raw]
        report = report_from_arrays(self.eval_y, self.old_eval_preds, eval_preds)
        self.rows.append(EpochMetrics(epoch + 1, er_train, report.er_new,
                                      report.nfr, report.rel_nfr, nfr_train))
        self.final = report


def run_experiment(config: ExperimentConfig,
                   state: Optional[ScenarioState] = None) -> ExperimentResult:
    """Run one experiment; reuses `state` (dataset + old side) when given."""
    if state is None:
        state = prepare_scenario(config)
    if config.method == "ensemble":
        return _run_ensemble(config, state)

    plan = state.plan
    old = state.old_single
    new_view = plan.new_job.view
    x, y = new_view.features(SPLIT_TRAIN), new_view.labels(SPLIT_TRAIN)
    objective = make_objective(y, old.oracle, config.pc)

    runs = []
    for rep in range(config.repetitions):
        seed = config.train.seed + NEW_MODEL_SEED_OFFSET + rep
        cfg = with_seed(config.train, seed)
        if plan.new_job.init_from_old:
            model = old.models[0].copy()
        else:
            model = init_model(plan.new_job.dims(), seed,
                               weight_init=cfg.weight_init)
        collector = _EpochCollector(x, y, old.train_preds, plan.eval_plan,
                                    old.eval_preds)
        result = train(model, x, y, objective, cfg, on_epoch_end=collector)
        if collector.final is None:  # zero-epoch schedule: score the init
            collector(-1, result.model)
        runs.append(RunArtifacts(rep, seed, result.model.parameter_count(),
                                 collector.rows, collector.final))
    return ExperimentResult(config, old.er_old, old.param_count, runs)


def _run_ensemble(config: ExperimentConfig, state: ScenarioState) -> ExperimentResult:
    plan = state.plan
    size = config.ensemble_size
    old = state.old_ensembles.get(size)
    if old is None:
        old = _build_old_reference(plan, config.train, members=size)
        state.old_ensembles[size] = old

    new_view = plan.new_job.view
    x, y = new_view.features(SPLIT_TRAIN), new_view.labels(SPLIT_TRAIN)
    dims = plan.new_job.dims()
    objective = make_ce_objective(y)
    ep = plan.eval_plan
    epochs = config.train.epochs
    k = new_view.num_classes

    runs = []
    for rep in range(config.repetitions):
        base = (config.train.seed + ENSEMBLE_SEED_OFFSET
                + rep * ENSEMBLE_REP_STRIDE)
        # member logits summed per epoch; the mean's argmax never needs the 1/L
        train_acc = np.zeros((epochs, x.shape[0], k))
        eval_acc = np.zeros((epochs, ep.features.shape[0], k))
        members = []
        for j in range(size):
            seed = base + j

            def hook(e, m):
                train_acc[e] += batch_logits(m, x)
                eval_acc[e] += batch_logits(m, ep.features)

            if plan.new_job.init_from_old:
                model = old.models[j].copy()
            else:
                model = init_model(dims, seed, weight_init=config.train.weight_init)
            members.append(train(model, x, y, objective,
                                 with_seed(config.train, seed),
                                 on_epoch_end=hook).model)
        collector = _EpochCollector(x, y, old.train_preds, ep, old.eval_preds)
        if epochs == 0:
            collector.record(-1,
                             np.argmax(_mean_logits(members, x), axis=1),
                             np.argmax(_mean_logits(members, ep.features), axis=1))
        else:
            for e in range(epochs):
                collector.record(e, np.argmax(train_acc[e], axis=1),
                                 np.argmax(eval_acc[e], axis=1))
        param_count = sum(m.parameter_count() for m in members)
        runs.append(RunArtifacts(rep, base, param_count, collector.rows,
                                 collector.final))
    return ExperimentResult(config, old.er_old, old.param_count, runs)


# ---------------------------------------------------------------------------
# method comparison and sweeps


@dataclass(frozen=True)
class MethodRow:
    method: str
    er_old: float
    er_new: float
    nfr: float
    rel_nfr: Optional[float]
    param_count: int


@dataclass
class ComparisonTable:
    rows: List[MethodRow]
    results: Dict[str, ExperimentResult] = field(default_factory=dict, repr=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["method", "er_old", "er_new", "nfr", "rel_nfr", "n_params"])
        for r in self.rows:
            writer.writerow([r.method, repr(r.er_old), repr(r.er_new), repr(r.nfr),
                             "" if r.rel_nfr is None else repr(r.rel_nfr),
                             r.param_count])
        return buf.getvalue()


def compare_methods(config: ExperimentConfig,
                    methods: Sequence[str] = METHODS,
                    state: Optional[ScenarioState] = None) -> ComparisonTable:
    """Run each method on the same scenario against the same old model.

    Medians across repetitions land in the table; full results stay in
    ``results`` keyed by method name.
    """
    methods = list(methods)
    if not methods or len(set(methods)) != len(methods):
        raise ValueError("methods must be non-empty and unique")
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; expected one of {METHODS}")
    if state is None:
        state = prepare_scenario(config)

    rows, results = [], {}
    for m in methods:
        res = run_experiment(replace(config, method=m), state)
        s = res.summary()
        rows.append(MethodRow(m, res.er_old, s["er_new"]["median"],
                              s["nfr"]["median"], s["rel_nfr"]["median"],
                              res.runs[0].param_count))
        results[m] = res
    return ComparisonTable(rows, results)


@dataclass(frozen=True)
class FocalSweepRow:
    alpha: float
    beta: float
    er_new: float
    nfr: float
    rel_nfr: Optional[float]


@dataclass
class FocalSweepTable:
    rows: List[FocalSweepRow]
    results: Dict[Tuple[float, float], ExperimentResult] = field(
        default_factory=dict, repr=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["alpha", "beta", "er_new", "nfr", "rel_nfr"])
        for r in self.rows:
            writer.writerow([repr(r.alpha), repr(r.beta), repr(r.er_new),
                             repr(r.nfr),
                             "" if r.rel_nfr is None else repr(r.rel_nfr)])
        return buf.getvalue()


def sweep_focal(config: ExperimentConfig,
                grid: Sequence[Tuple[float, float]],
                state: Optional[ScenarioState] = None) -> FocalSweepTable:
    """Re-run a focal-distillation experiment for each (alpha, beta) pair."""
    if config.pc.mode != "focal":
        raise ValueError("focal sweep needs method fd_kl or fd_lm")
    grid = [(float(a), float(b)) for a, b in grid]
    if not grid:
        raise ValueError("grid must be non-empty")
    if state is None:
        state = prepare_scenario(config)

    rows, results = [], {}
    for a, b in grid:
        pc = replace(config.pc, filter=FilterSpec(a, b))
        res = run_experiment(replace(config, pc=pc), state)
        s = res.summary()
        rows.append(FocalSweepRow(a, b, s["er_new"]["median"],
                                  s["nfr"]["median"], s["rel_nfr"]["median"]))
        results[(a, b)] = res
    return FocalSweepTable(rows, results)


def sweep_ensemble(config: ExperimentConfig, sizes: Sequence[int],
                   max_workers: int = 1) -> SweepResult:
    """Flip metrics versus ensemble size, on the full training split.

    Both sides use the scenario's architectures and the full data so that
    size is the only variable; seed ranges are disjoint by construction.
    """
    dataset = generate(config.dataset)
    old_dims = config.scenario.old_model.dims(dataset.input_dim, dataset.num_classes)
    new_dims = config.scenario.new_model.dims(dataset.input_dim, dataset.num_classes)
    return sweep_ensemble_size(old_dims, new_dims, dataset, config.train, sizes,
                               config.train.seed,
                               config.train.seed + ENSEMBLE_SEED_OFFSET,
                               max_workers=max_workers)


def epoch_series_csv(run: RunArtifacts) -> str:
    """Per-epoch metric series, one row per epoch."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "er_train", "er_val", "nfr_val", "rel_nfr_val",
                     "nfr_train"])
    for row in run.epochs:
        writer.writerow([row.epoch, repr(row.er_train), repr(row.er_val),
                         repr(row.nfr_val),
                         "" if row.rel_nfr_val is None else repr(row.rel_nfr_val),
                         repr(row.nfr_train)])
    return buf.getvalue()
