"""Outlier flags, descriptive trees, covariate overlap and cross-validation."""

from .cv import CvResult, cross_population_cv, fold_assignment, fold_metrics, kfold_cv
from .fit_the_fit import FitTheFitTree, fit_the_fit, two_proportion_z
from .outliers import (
    MAD_SCALE,
    DiagnosticWarning,
    OutlierResult,
    OutlierRule,
    detect_outliers,
    detect_outliers_by_split,
)
from .overlap import OverlapReport, auc, logistic_irls, overlap_score

__all__ = [
    "CvResult",
    "DiagnosticWarning",
    "FitTheFitTree",
    "MAD_SCALE",
    "OutlierResult",
    "OutlierRule",
    "OverlapReport",
    "auc",
    "cross_population_cv",
    "detect_outliers",
    "detect_outliers_by_split",
    "fit_the_fit",
    "fold_assignment",
    "fold_metrics",
    "kfold_cv",
    "logistic_irls",
    "overlap_score",
    "two_proportion_z",
]
