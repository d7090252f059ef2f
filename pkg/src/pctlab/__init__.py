"""pctlab: a desk-scale lab for studying regression in model updates.

Train small dense classifiers on synthetic Gaussian tasks, measure
prediction flips between an old and a new model (negative flip rate and
friends), and compare update methods: plain retraining, naive reweighting,
focal distillation, and logit-averaged ensembles.
"""

from .datasets import Dataset, DatasetView, SyntheticSpec, generate
from .ensembles import Ensemble, ensemble_logits, sweep_ensemble_size, train_ensemble
from .flips import (FlipQuadrant, FlipReport, PredictionRecord, UncertaintyRecord,
                    classify_flip, compute_nfr, compute_relative_nfr,
                    default_entropy_bins, flip_report, nfr_by_uncertainty_bin,
                    predictive_entropy, report_from_arrays)
from .harness import (METHODS, ExperimentConfig, ExperimentResult, RunArtifacts,
                      compare_methods, pc_config_for_method, prepare_scenario,
                      run_experiment, sweep_ensemble, sweep_focal)
from .losses import (DistanceSpec, FilterSpec, OldModelOracle, PCLossConfig,
                     distance_kl, distance_lm, filter_weight, make_ce_objective,
                     make_objective, pc_loss_focal, pc_loss_naive, total_objective)
from .nn import (MLPModel, TrainConfig, TrainResult, backward, batch_logits,
                 cross_entropy, error_rate, forward, init_model, predict,
                 predict_batch, softmax, train)
from .scenarios import (DataFilter, ModelSpec, ScenarioKind, UpdateScenario,
                        build_scenario, reference_scenario)

__version__ = "0.1.0"

__all__ = [
    "Dataset", "DatasetView", "SyntheticSpec", "generate",
    "Ensemble", "ensemble_logits", "sweep_ensemble_size", "train_ensemble",
    "FlipQuadrant", "FlipReport", "PredictionRecord", "UncertaintyRecord",
    "classify_flip", "compute_nfr", "compute_relative_nfr",
    "default_entropy_bins", "flip_report", "nfr_by_uncertainty_bin",
    "predictive_entropy", "report_from_arrays",
    "METHODS", "ExperimentConfig", "ExperimentResult", "RunArtifacts",
    "compare_methods", "pc_config_for_method", "prepare_scenario",
    "run_experiment", "sweep_ensemble", "sweep_focal",
    "DistanceSpec", "FilterSpec", "OldModelOracle", "PCLossConfig",
    "distance_kl", "distance_lm", "filter_weight", "make_ce_objective",
    "make_objective", "pc_loss_focal", "pc_loss_naive", "total_objective",
    "MLPModel", "TrainConfig", "TrainResult", "backward", "batch_logits",
    "cross_entropy", "error_rate", "forward", "init_model", "predict",
    "predict_batch", "softmax", "train",
    "DataFilter", "ModelSpec", "ScenarioKind", "UpdateScenario",
    "build_scenario", "reference_scenario",
    "__version__",
]
