"""Sensitivity of tree-ensemble predictions to an unobserved predictor.

Main entry points: :func:`generate_synthetic` builds a column with a chosen
correlation to the outcome, :func:`run_sensitivity` sweeps that correlation
and compares models with and without the column, and the
:mod:`predsens.diagnostics` helpers cover outliers, overlap and
cross-validation.
"""

from importlib.metadata import PackageNotFoundError, version

from .data import Dataset, impute_simple, load_csv, moments, standardize, write_csv
from .errors import ConfigError, DataError, NotPSDError, NumericalError, PredsensError
from .kernels import BACKEND
from .regressors import (
    FittedModel,
    PredictiveDistribution,
    RegressorConfig,
    fit,
    load_model,
    point_predict,
    predict_distribution,
)
from .sensitivity import SensitivityReport, SensitivitySpec, run_sensitivity
from .synth import CorrelationSpec, SynthResult, generate_exact_oracle, generate_synthetic

try:
    __version__ = version("predsens")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

__all__ = [
    "BACKEND",
    "ConfigError",
    "CorrelationSpec",
    "DataError",
    "Dataset",
    "FittedModel",
    "NotPSDError",
    "NumericalError",
    "PredictiveDistribution",
    "PredsensError",
    "RegressorConfig",
    "SensitivityReport",
    "SensitivitySpec",
    "SynthResult",
    "fit",
    "generate_exact_oracle",
    "generate_synthetic",
    "impute_simple",
    "load_csv",
    "load_model",
    "moments",
    "point_predict",
    "predict_distribution",
    "run_sensitivity",
    "standardize",
    "write_csv",
]
