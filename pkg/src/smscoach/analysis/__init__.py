"""Evaluation computations over a run's event log."""

from .clustering import ClusterResult, best_permutation, cluster_patients, sign_pattern
from .dataset import RunData, load_run
from .effects import (
    EffectTable,
    PairGrid,
    ResponseVector,
    message_effect_table,
    pair_effect_grid,
    phase_anova,
    repeat_contrast,
    response_vectors,
)
from .glycemic import Hba1cModel, Hba1cRecord, arm_trend, hba1c_model, hba1c_records, relative_reduction
from .learning import LearningPoint, learning_curve, noise_ceiling
from .report import analyze, report_markdown
from .slopes import SlopeEstimate, activity_slope, activity_slopes, arm_average, cadence_slope, cadence_slopes
from .stats import AnalysisError, AnovaResult, f_sf, line_fit, one_way_anova

__all__ = [
    "AnalysisError",
    "AnovaResult",
    "ClusterResult",
    "EffectTable",
    "Hba1cModel",
    "Hba1cRecord",
    "LearningPoint",
    "PairGrid",
    "ResponseVector",
    "RunData",
    "SlopeEstimate",
    "activity_slope",
    "activity_slopes",
    "analyze",
    "arm_average",
    "arm_trend",
    "best_permutation",
    "cadence_slope",
    "cadence_slopes",
    "cluster_patients",
    "f_sf",
    "hba1c_model",
    "hba1c_records",
    "learning_curve",
    "line_fit",
    "load_run",
    "message_effect_table",
    "noise_ceiling",
    "one_way_anova",
    "pair_effect_grid",
    "phase_anova",
    "relative_reduction",
    "repeat_contrast",
    "report_markdown",
    "response_vectors",
    "sign_pattern",
]
