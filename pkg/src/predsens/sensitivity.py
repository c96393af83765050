"""Prediction sensitivity to an unobserved predictor.

For each correlation level a synthetic predictor ``R`` is generated on the
study rows, and a model on ``G = [R, X]`` (augmented) is compared with the
model on ``X`` alone (original). Both are trained on the same rows and
evaluated on a fixed held-out fold of study rows:

* unit level: a unit is flagged when the augmented model's mean prediction
  falls outside the original model's central predictive interval;
* aggregate: RMSE/MAE percentile intervals across the predictive draws,
  and R^2 intervals from Cohen's large-sample standard error. Two sides
  differ significantly when their intervals are disjoint.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .data import Dataset, correlation_matrix, standardize_matrix
from .errors import ConfigError, DataError, NotPSDError
from .regressors import RegressorConfig, fit_arrays, training_arrays
from .synth import CorrelationSpec, cholesky_psd, generate_synthetic, target_matrix
from .utils import derive_seed, parallel_map

DEFAULT_LEVELS = (0.1, 0.2, 0.3, 0.4, 0.5)
METRICS = ("rmse", "mae", "r2", "r2_adjusted")
SIDES = ("original", "augmented")
SYNTHETIC_NAME = "R_synthetic"
UNIT_TESTS = ("interval", "ttest")

# seed streams
_SPLIT, _ORIGINAL, _ORIGINAL_DRAWS, _LEVEL = 0, 1, 2, 3


@dataclass(frozen=True)
class SensitivitySpec:
    """Settings of a correlation sweep.

    ``unit_test`` selects the unit-level rule: ``"interval"`` (containment
    of the augmented mean in the original interval) or ``"ttest"`` (Welch
    test on the two draw sets at level ``1 - interval_level``).
    """

    correlation_levels: tuple = DEFAULT_LEVELS
    bootstrap_b: int = 100
    interval_level: float = 0.95
    metric_ci_level: float = 0.99
    correlate_top_k: int = 0
    regressor: RegressorConfig = field(default_factory=RegressorConfig)
    seed: int = 0
    holdout_fraction: float = 0.2
    unit_test: str = "interval"
    refit: bool = False

    def __post_init__(self):
        levels = tuple(float(v) for v in self.correlation_levels)
        object.__setattr__(self, "correlation_levels", levels)
        if not levels:
            raise ConfigError("correlation_levels", "at least one level is required")
        for v in levels:
            if not -1.0 < v < 1.0:
                raise ConfigError("correlation_levels", f"level {v} outside (-1, 1)")
        if len(set(levels)) != len(levels):
            raise ConfigError("correlation_levels", "levels must be distinct")
        if int(self.bootstrap_b) != self.bootstrap_b or self.bootstrap_b < 2:
            raise ConfigError("bootstrap_b", f"must be an integer >= 2, got {self.bootstrap_b}")
        for name in ("interval_level", "metric_ci_level"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(name, f"must lie in (0, 1), got {v}")
        if self.correlate_top_k < 0:
            raise ConfigError("correlate_top_k", "must be nonnegative")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ConfigError("holdout_fraction", "must lie in (0, 1)")
        if self.unit_test not in UNIT_TESTS:
            raise ConfigError("unit_test", f"must be one of {UNIT_TESTS}")
        if isinstance(self.regressor, dict):
            object.__setattr__(self, "regressor", RegressorConfig(**self.regressor))

    def to_dict(self):
        return {
            "correlation_levels": list(self.correlation_levels),
            "bootstrap_b": int(self.bootstrap_b),
            "interval_level": self.interval_level,
            "metric_ci_level": self.metric_ci_level,
            "correlate_top_k": self.correlate_top_k,
            "regressor": self.regressor.to_dict(),
            "seed": self.seed,
            "holdout_fraction": self.holdout_fraction,
            "unit_test": self.unit_test,
            "refit": self.refit,
        }


@dataclass(frozen=True, eq=False)
class AugmentedDataset:
    """Study rows of a dataset with the synthetic predictor prepended."""

    base: Dataset
    synthetic: np.ndarray
    synthetic_name: str = SYNTHETIC_NAME

    def __post_init__(self):
        r = np.asarray(self.synthetic, dtype=np.float64)
        if r.shape != (self.base.row_count,):
            raise DataError("synthetic column must have one value per row")
        if self.synthetic_name in self.base.names:
            raise DataError(f"column {self.synthetic_name!r} already exists")
        object.__setattr__(self, "synthetic", r)

    @property
    def data(self):
        return self.base.with_column(self.synthetic_name, self.synthetic, position=1)

    @property
    def predictor_names(self):
        return (self.synthetic_name,) + self.base.predictor_names

    @property
    def predictors(self):
        return np.column_stack([self.synthetic, self.base.predictors])


# ---------------------------------------------------------------------------
# metric helpers
# ---------------------------------------------------------------------------

def adjusted_r2(r2, n, k):
    """Adjusted R^2, ``1 - (1 - R^2)(n - 1)/(n - k - 1)``."""
    if n <= k + 1:
        raise ValueError(f"adjusted R^2 needs n > k + 1 (n={n}, k={k})")
    return 1.0 - (1.0 - r2) * (n - 1) / (n - k - 1)


def cohen_r2_se(r2, n, k):
    """Large-sample standard error of R^2 with ``k`` predictors and ``n`` rows."""
    if n <= k + 1:
        raise ValueError(f"the R^2 standard error needs n > k + 1 (n={n}, k={k})")
    num = 4.0 * r2 * (1.0 - r2) ** 2 * (n - k - 1) ** 2
    den = (n * n - 1.0) * (n + 3.0)
    return float(np.sqrt(num / den))


def _z(level):
    return float(stats.norm.ppf(0.5 + level / 2.0))


def _percentile_ci(values, level):
    tail = (1.0 - level) / 2.0 * 100.0
    lo, hi = np.percentile(values, [tail, 100.0 - tail])
    return float(lo), float(hi)


def metric_draws(pd, y):
    """Per-draw RMSE and MAE of the regression-function draws against ``y``."""
    f = pd.fdraws if pd.fdraws is not None else pd.draws
    resid = f - y[:, None]
    return {
        "rmse": np.sqrt(np.mean(resid * resid, axis=0)),
        "mae": np.mean(np.abs(resid), axis=0),
    }


def metric_estimates(pd, y, k, level):
    """Point estimates and intervals of every metric for one model.

    RMSE/MAE: median and percentile interval across draws. R^2: computed on
    the mean prediction, interval ``R^2 +/- z * SE`` with Cohen's SE; the
    adjusted row maps both endpoints through :func:`adjusted_r2`.
    """
    out = {}
    for name, values in metric_draws(pd, y).items():
        lo, hi = _percentile_ci(values, level)
        out[name] = {"estimate": float(np.median(values)), "lo": lo, "hi": hi}
    n = y.shape[0]
    f = pd.fdraws if pd.fdraws is not None else pd.draws
    pred = f.mean(axis=1)
    yc = y - y.mean()
    sst = float(yc @ yc)
    if sst == 0:
        raise DataError("held-out outcome has zero variance; R^2 undefined")
    resid = y - pred
    r2 = 1.0 - float(resid @ resid) / sst
    half = _z(level) * cohen_r2_se(min(max(r2, 0.0), 1.0), n, k)
    out["r2"] = {"estimate": r2, "lo": r2 - half, "hi": r2 + half}
    out["r2_adjusted"] = {
        key: adjusted_r2(val, n, k) for key, val in out["r2"].items()
    }
    return out


def intervals_disjoint(a, b):
    return bool(a["hi"] < b["lo"] or b["hi"] < a["lo"])


def compare_metrics(orig, aug):
    """Pair per-side metric estimates and mark disjoint intervals as significant."""
    rows = {}
    for name in METRICS:
        rows[name] = {
            "original": orig[name],
            "augmented": aug[name],
            "significant": intervals_disjoint(orig[name], aug[name]),
        }
    return rows


def flag_units(orig, aug, level=0.95, mode="interval"):
    """Units whose augmented predictions differ from the original ones."""
    if mode == "interval":
        lo, hi = orig.interval(level)
        m = aug.mean
        return (m < lo) | (m > hi)
    if mode == "ttest":
        with np.errstate(invalid="ignore", divide="ignore"):
            res = stats.ttest_ind(orig.draws, aug.draws, axis=1, equal_var=False)
        p = np.nan_to_num(res.pvalue, nan=1.0)
        return p < 1.0 - level
    raise ValueError(f"unknown unit test {mode!r}")


def top_k_correlated_spec(m, k, rho, k_hat=None, seed=0):
    """Spec correlating the synthetic predictor with the ``k`` most important predictors.

    With ``k_hat`` (empirical correlation of ``[Y, X]`` or of the full
    stacked matrix) the implied target matrix is checked for positive
    definiteness.

    Raises
    ------
    NotPSDError
        If the target matrix cannot be factorized; lists the entries.
    """
    p = m.predictor_count
    if not 0 <= k <= p:
        raise ConfigError("correlate_top_k", f"must lie in [0, {p}], got {k}")
    if k == 0:
        return CorrelationSpec(rho, None, seed=seed)
    top = m.importance_ranking()[:k]
    rp = np.zeros(p)
    rp[top] = rho
    spec = CorrelationSpec(rho, tuple(rp), seed=seed)
    if k_hat is not None:
        kh = np.asarray(getattr(k_hat, "correlation", k_hat), dtype=np.float64)
        if kh.shape[0] == p + 1:
            kh = np.insert(np.insert(kh, 1, 0.0, axis=0), 1, 0.0, axis=1)
            kh[1, 1] = 1.0
        try:
            cholesky_psd(target_matrix(spec, kh))
        except NotPSDError as err:
            entries = {"rho_outcome": rho}
            entries.update({f"rho_{m.predictor_names[j]}": rho for j in top})
            raise NotPSDError(
                f"correlating the synthetic predictor with {entries} gives an indefinite "
                f"target matrix (leading minor {err.minor})",
                minor=err.minor,
                entries=entries,
            ) from None
    return spec


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SensitivityReport:
    spec: SensitivitySpec
    levels: list
    original_metrics: dict
    holdout_size: int
    train_size: int
    predictor_names: tuple
    warnings: list = field(default_factory=list)

    def level(self, rho):
        for lv in self.levels:
            if lv["rho"] == rho:
                return lv
        raise KeyError(rho)

    @property
    def completed(self):
        return [lv for lv in self.levels if lv["status"] == "ok"]

    @property
    def skipped(self):
        return [lv for lv in self.levels if lv["status"] == "skipped"]

    def to_dict(self):
        return {
            "spec": self.spec.to_dict(),
            "holdout_size": self.holdout_size,
            "train_size": self.train_size,
            "predictors": list(self.predictor_names),
            "original_metrics": self.original_metrics,
            "levels": self.levels,
            "defaults_declared": {
                "unit_test": self.spec.unit_test,
                "bootstrap_b": int(self.spec.bootstrap_b),
                "interval_level": self.spec.interval_level,
                "metric_ci_level": self.spec.metric_ci_level,
                "holdout_fraction": self.spec.holdout_fraction,
                "draw_source": "refit" if self.spec.refit else "model",
            },
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def curve_rows(self):
        """Long-format rows ``(rho, metric, side, estimate, lo, hi)``."""
        rows = []
        for lv in self.completed:
            for metric in METRICS:
                for side in SIDES:
                    e = lv["metrics"][metric][side]
                    rows.append((lv["rho"], metric, side, e["estimate"], e["lo"], e["hi"]))
        return rows

    def write_curves(self, path, metrics=METRICS):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["rho", "metric", "side", "estimate", "lo", "hi"])
            for row in self.curve_rows():
                if row[1] in metrics:
                    w.writerow([repr(row[0]), row[1], row[2]] + [repr(float(v)) for v in row[3:]])


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def holdout_split(n, fraction, seed):
    """Deterministic ``(train, holdout)`` row indices."""
    perm = np.random.default_rng(seed).permutation(n)
    n_hold = min(max(1, int(round(fraction * n))), n - 2)
    return np.sort(perm[n_hold:]), np.sort(perm[:n_hold])


def run_sensitivity(d, spec=None, workers=None):
    """Sweep the correlation levels; levels with an indefinite target are skipped.

    The original model is fitted once. At every level the synthetic
    predictor is generated on all study rows, the augmented model is fitted
    on the training rows, and both models produce ``bootstrap_b`` draws for
    the held-out rows. Levels run on ``workers`` threads (default from
    ``PREDSENS_THREADS``); every level has its own seeds, so the report does
    not depend on the worker count.
    """
    spec = spec or SensitivitySpec()
    study = d.study()
    x, y = training_arrays(study)
    names = study.predictor_names
    n, p = x.shape
    b = int(spec.bootstrap_b)
    train, hold = holdout_split(n, spec.holdout_fraction, derive_seed(spec.seed, _SPLIT))
    if hold.size <= p + 2:
        raise DataError(f"held-out fold of {hold.size} rows is too small for {p + 1} predictors")
    if y[hold].max() == y[hold].min():
        raise DataError("held-out outcome has zero variance")
    level_ci = spec.metric_ci_level

    caught = []
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        cfg = spec.regressor.with_seed(derive_seed(spec.seed, _ORIGINAL))
        original = fit_arrays(x[train], y[train], names, cfg)
        pd_orig = original.predict_distribution(
            x[hold], b, seed=derive_seed(spec.seed, _ORIGINAL_DRAWS), refit=spec.refit
        )
        orig_metrics = metric_estimates(pd_orig, y[hold], p, level_ci)
        k_hat = None
        if spec.correlate_top_k:
            z, _ = standardize_matrix(np.column_stack([y, x]))
            k_hat, _ = correlation_matrix(z)

        levels = parallel_map(
            lambda item: _run_level(study, x, y, train, hold, item[0], item[1], spec,
                                    original, pd_orig, orig_metrics, k_hat),
            enumerate(spec.correlation_levels),
            workers,
        )
        # threads may interleave, so the order is normalized
        caught.extend(sorted(str(w.message) for w in rec))

    return SensitivityReport(
        spec=spec,
        levels=levels,
        original_metrics=orig_metrics,
        holdout_size=int(hold.size),
        train_size=int(train.size),
        predictor_names=tuple(names),
        warnings=caught,
    )


def _run_level(study, x, y, train, hold, i, rho, spec, original, pd_orig, orig_metrics, k_hat):
    n, p = x.shape
    synth_seed = derive_seed(spec.seed, _LEVEL, i, 0)
    entry = {"rho": rho, "index": i}
    try:
        if spec.correlate_top_k:
            cspec = top_k_correlated_spec(original, spec.correlate_top_k, rho, k_hat, synth_seed)
        else:
            cspec = CorrelationSpec(rho, None, seed=synth_seed)
        synth = generate_synthetic(study, cspec)
    except NotPSDError as err:
        entry.update({"status": "skipped", "skip_reason": str(err)})
        return entry

    aug = AugmentedDataset(study, synth.r)
    g = aug.predictors
    cfg = spec.regressor.with_seed(derive_seed(spec.seed, _LEVEL, i, 1))
    model = fit_arrays(g[train], y[train], aug.predictor_names, cfg)
    pd_aug = model.predict_distribution(
        g[hold], int(spec.bootstrap_b), seed=derive_seed(spec.seed, _LEVEL, i, 2), refit=spec.refit
    )
    flags = flag_units(pd_orig, pd_aug, spec.interval_level, spec.unit_test)
    aug_metrics = metric_estimates(pd_aug, y[hold], p + 1, spec.metric_ci_level)
    entry.update(
        {
            "status": "ok",
            "flagged_fraction": float(flags.mean()),
            "flagged_count": int(flags.sum()),
            "metrics": compare_metrics(orig_metrics, aug_metrics),
            "achieved": {
                "outcome": synth.achieved_outcome,
                "max_abs_predictor": float(np.abs(synth.achieved_predictors).max()),
                "predictors": dict(zip(study.predictor_names, map(float, synth.achieved_predictors))),
            },
            "targets": cspec.to_dict(),
            "shift_used": synth.shift_used,
            "synthetic_importance": float(model.variable_importance[0]),
        }
    )
    return entry


__all__ = [
    "AugmentedDataset",
    "DEFAULT_LEVELS",
    "SensitivityReport",
    "SensitivitySpec",
    "adjusted_r2",
    "cohen_r2_se",
    "compare_metrics",
    "flag_units",
    "holdout_split",
    "metric_draws",
    "metric_estimates",
    "run_sensitivity",
    "top_k_correlated_spec",
]
