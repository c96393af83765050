"""K-fold cross-validation, within the study split or across populations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from ..regressors import RegressorConfig, fit_arrays, training_arrays
from ..utils import derive_seed, parallel_map

FOLD_METRICS = ("rmse", "mae", "r2")


def fold_assignment(n, k, seed):
    """Fold label of each of ``n`` rows; fold sizes differ by at most one."""
    if k < 2:
        raise DataError(f"at least 2 folds are required, got {k}")
    if n < k:
        raise DataError(f"{n} rows cannot fill {k} folds")
    folds = np.empty(n, dtype=np.int64)
    folds[np.random.default_rng(seed).permutation(n)] = np.arange(n) % k
    return folds


def fold_metrics(y, pred):
    """RMSE, MAE and R^2 of one fold; R^2 is None for a constant outcome."""
    r = y - pred
    yc = y - y.mean()
    sst = float(yc @ yc)
    return {
        "rmse": float(np.sqrt(np.mean(r * r))),
        "mae": float(np.mean(np.abs(r))),
        "r2": None if sst == 0 else 1.0 - float(r @ r) / sst,
        "n": int(y.shape[0]),
    }


@dataclass(frozen=True, eq=False)
class CvResult:
    folds: list
    k: int
    seed: int
    assignment: np.ndarray
    kind: str = "within"

    @property
    def aggregate(self):
        """Arithmetic mean of every metric over the folds where it is defined."""
        out = {}
        for name in FOLD_METRICS:
            vals = [f[name] for f in self.folds if f[name] is not None]
            out[name] = float(np.mean(vals)) if vals else None
        out["r2_missing_folds"] = sum(f["r2"] is None for f in self.folds)
        return out

    def to_dict(self):
        return {
            "kind": self.kind,
            "k": self.k,
            "seed": self.seed,
            "folds": self.folds,
            "aggregate": self.aggregate,
        }


def _fit_predict(cfg, names, x_train, y_train, x_test, seed):
    model = fit_arrays(x_train, y_train, names, cfg.with_seed(seed))
    return model.point_predict(x_test)


def kfold_cv(d, cfg=None, k=10, seed=0, workers=None):
    """Cross-validated point-prediction accuracy on the study rows."""
    cfg = cfg or RegressorConfig()
    study = d.study()
    x, y = training_arrays(study)
    n = y.shape[0]
    if n < 2 * k:
        raise DataError(f"{n} study rows are too few for {k}-fold CV (need {2 * k})")
    folds = fold_assignment(n, k, seed)
    names = study.predictor_names

    def one(i):
        test = folds == i
        pred = _fit_predict(cfg, names, x[~test], y[~test], x[test], derive_seed(seed, i))
        return {"fold": i, **fold_metrics(y[test], pred)}

    return CvResult(parallel_map(one, range(k), workers), k, seed, folds)


def cross_population_cv(d, proxy_outcome, cfg=None, k=10, seed=0, workers=None):
    """Train on k-1 study folds, test on one target fold, ``k`` times.

    ``proxy_outcome`` names a column observed on both splits; it replaces
    the outcome (the original outcome column is dropped from the predictors).
    """
    cfg = cfg or RegressorConfig()
    if proxy_outcome not in d.names:
        raise DataError(f"proxy outcome {proxy_outcome!r} not found")
    if proxy_outcome == d.outcome_name:
        raise DataError("the proxy outcome must differ from the outcome, which the target lacks")
    proxy = d.column(proxy_outcome)
    if np.isnan(proxy[d.is_target]).any():
        raise DataError(f"proxy outcome {proxy_outcome!r} is missing on target rows")
    pd_ = d.with_outcome(proxy_outcome)
    names = pd_.predictor_names
    x_all = pd_.predictors
    if np.isnan(x_all).any():
        raise DataError("predictors have missing cells; impute first")
    y_all = pd_.outcome
    s_rows = np.flatnonzero(d.is_study)
    t_rows = np.flatnonzero(d.is_target)
    if s_rows.size < 2 * k:
        raise DataError(f"{s_rows.size} study rows are too few for {k} folds")
    if t_rows.size < k:
        raise DataError(f"{t_rows.size} target rows are too few for {k} folds")
    s_folds = fold_assignment(s_rows.size, k, derive_seed(seed, 0))
    t_folds = fold_assignment(t_rows.size, k, derive_seed(seed, 1))
    assignment = np.full(d.row_count, -1, dtype=np.int64)
    assignment[s_rows] = s_folds
    assignment[t_rows] = t_folds

    def one(i):
        train = s_rows[s_folds != i]
        test = t_rows[t_folds == i]
        pred = _fit_predict(cfg, names, x_all[train], y_all[train], x_all[test],
                            derive_seed(seed, 2, i))
        return {"fold": i, **fold_metrics(y_all[test], pred)}

    return CvResult(parallel_map(one, range(k), workers), k, seed, assignment, kind="cross_population")
