"""Tree-ensemble regressors with per-unit predictive distributions."""

from .base import FittedModel, load_model, model_from_bytes, training_arrays
from .bart import BartModel
from .config import BART, FOREST, BartParams, ForestParams, RegressorConfig
from .distribution import PredictiveDistribution
from .forest import ForestModel

_MODELS = {BART: BartModel, FOREST: ForestModel}


def fit_arrays(x, y, names, cfg):
    """Fit on an explicit predictor matrix and outcome vector."""
    return _MODELS[cfg.kind].fit(x, y, tuple(names), cfg)


def fit(d, cfg=None):
    """Fit a regressor on the study rows of a dataset.

    Raises
    ------
    DataError
        If predictors are incomplete or the outcome has zero variance.
    """
    cfg = cfg or RegressorConfig()
    x, y = training_arrays(d)
    return fit_arrays(x, y, d.predictor_names, cfg)


def predict_distribution(m, rows, b, seed=None, refit=False):
    return m.predict_distribution(rows, b, seed=seed, refit=refit)


def point_predict(m, rows):
    return m.point_predict(rows)


__all__ = [
    "BART",
    "FOREST",
    "BartModel",
    "BartParams",
    "FittedModel",
    "ForestModel",
    "ForestParams",
    "PredictiveDistribution",
    "RegressorConfig",
    "fit",
    "fit_arrays",
    "load_model",
    "model_from_bytes",
    "point_predict",
    "predict_distribution",
]
