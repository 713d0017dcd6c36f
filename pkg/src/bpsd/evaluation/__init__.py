"""Metrics, splits, per-patient evaluation, ablation and reports."""
from .harness import (
    ABLATION_SETS,
    AblationRow,
    Evaluation,
    NoEvaluablePatients,
    PatientEvaluation,
    evaluate_members,
    evaluate_two_stage,
    run_ablation,
    write_reports,
)
from .metrics import METRICS, Aggregate, ConfusionMatrix, MetricReport, aggregate, macro_auc, metrics_from_confusion, roc_auc
from .splits import SplitPlan, grouped_stratified_folds, make_splits

__all__ = [
    "ABLATION_SETS", "AblationRow", "Aggregate", "ConfusionMatrix", "Evaluation", "METRICS", "MetricReport",
    "NoEvaluablePatients", "PatientEvaluation", "SplitPlan", "aggregate", "evaluate_members", "evaluate_two_stage",
    "grouped_stratified_folds", "macro_auc", "make_splits", "metrics_from_confusion", "roc_auc", "run_ablation",
    "write_reports",
]
