"""Differentially private zeroth-order optimization with data-free pruning."""

from .errors import ConfigError, DimensionError, EvaluationError, NumericAbort
from .estimator import LossEvaluator, SamplingKey, ZOScale, finite_diff, zo_gradient
from .params import DirectionDistribution, derive_key, sample_direction
from .privacy import (BudgetLedger, PrivacySpec, amplify_by_subsampling, calibrate_sigma_ma,
                      calibrate_sigma_theorem1, strong_compose)
from .pruning import PruningConfig, build_importance_matrix, prune_then_finetune, zo_saliency
from .records import Checkpoint, MetricsLog
from .stagewise import StageSchedule, dp_zoo_step, run_stagewise, zo_sgd

__version__ = "0.1.0"

__all__ = [
    "BudgetLedger", "Checkpoint", "ConfigError", "DimensionError", "DirectionDistribution",
    "EvaluationError", "LossEvaluator", "MetricsLog", "NumericAbort", "PrivacySpec",
    "PruningConfig", "SamplingKey", "StageSchedule", "ZOScale", "amplify_by_subsampling",
    "build_importance_matrix", "calibrate_sigma_ma", "calibrate_sigma_theorem1", "derive_key",
    "dp_zoo_step", "finite_diff", "prune_then_finetune", "run_stagewise", "sample_direction",
    "strong_compose", "zo_gradient", "zo_saliency", "zo_sgd",
]
