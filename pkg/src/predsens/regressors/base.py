"""Shared fitted-model behaviour: design matrices, predictive draws, serialization."""

from __future__ import annotations

import io
import json

import numpy as np

from ..data import Dataset, moments_matrix
from ..errors import DataError
from ..utils import derive_seed
from .config import RegressorConfig
from .distribution import PredictiveDistribution

FORMAT_VERSION = 1
NOISE_STREAM = 1


def training_arrays(d):
    """Complete predictor matrix and outcome vector of the study rows."""
    s = d.study() if isinstance(d, Dataset) else d
    x = np.ascontiguousarray(s.predictors, dtype=np.float64)
    y = np.ascontiguousarray(s.outcome, dtype=np.float64)
    if np.isnan(x).any():
        raise DataError("predictors have missing cells; impute first")
    check_outcome(y)
    return x, y


def check_outcome(y):
    if y.shape[0] < 2:
        raise DataError("at least two training rows are required")
    if np.isnan(y).any():
        raise DataError("outcome is missing on training rows")
    if y.max() == y.min():
        raise DataError("outcome has zero variance; nothing to model")


def fit_metrics(y, pred):
    resid = y - pred
    sse = float(resid @ resid)
    yc = y - y.mean()
    sst = float(yc @ yc)
    return {
        "rmse": float(np.sqrt(sse / y.shape[0])),
        "mae": float(np.abs(resid).mean()),
        "r2": float(1.0 - sse / sst) if sst > 0 else float("nan"),
    }


class FittedModel:
    """Common interface of the fitted regressors.

    Subclasses provide ``_f_draws(x, b)`` returning noise-free draws of the
    regression function and the matching noise sd per draw, ``_point(x)``,
    and the ``_state``/``_restore`` pair for serialization.
    """

    kind = None

    def __init__(self, config, predictor_names, x, y, importance, info):
        self.config = config
        self.predictor_names = tuple(predictor_names)
        self.train_x = x
        self.train_y = y
        self.training_moments = moments_matrix(np.column_stack([y, x]), ("__outcome__",) + self.predictor_names)
        imp = np.asarray(importance, dtype=np.float64)
        self._raw_importance = imp
        total = imp.sum()
        self.variable_importance = imp / total if total > 0 else np.full(imp.shape, 1.0 / imp.size)
        self.info = dict(info)

    @property
    def predictor_count(self):
        return len(self.predictor_names)

    @property
    def in_sample(self):
        return fit_metrics(self.train_y, self.point_predict(self.train_x))

    def importance_ranking(self):
        """Predictor indices by decreasing importance (ties by position)."""
        return np.argsort(-self.variable_importance, kind="stable")

    def design(self, rows):
        """Predictor matrix in training column order, validated."""
        if isinstance(rows, Dataset):
            missing = [n for n in self.predictor_names if n not in rows.names]
            if missing:
                raise DataError(f"schema mismatch: columns {missing} not in the data")
            x = np.column_stack([rows.column(n) for n in self.predictor_names])
        else:
            x = np.asarray(rows, dtype=np.float64)
            if x.ndim == 1:
                x = x.reshape(1, -1)
            if x.ndim != 2 or x.shape[1] != self.predictor_count:
                raise DataError(
                    f"schema mismatch: expected {self.predictor_count} predictor columns, "
                    f"got shape {x.shape}"
                )
        if np.isnan(x).any():
            raise DataError("prediction rows have missing predictor cells")
        return np.ascontiguousarray(x, dtype=np.float64)

    def point_predict(self, rows):
        """Mean prediction with the noise term suppressed."""
        return self._point(self.design(rows))

    def predict_distribution(self, rows, b, seed=None, refit=False):
        """``b`` predictive draws per row, outcome noise included.

        Draws come from the fitted ensemble itself (posterior draws or
        individual trees). With ``refit=True``, or a forest asked for more
        draws than it has trees, each draw is instead the point prediction
        of a model refitted on a bootstrap resample of the training rows.
        """
        if b < 1:
            raise ValueError("b must be positive")
        x = self.design(rows)
        if refit or self._needs_refit(b):
            f, noise_sd = self._refit_draws(x, b)
        else:
            f, noise_sd = self._f_draws(x, b)
        seed = derive_seed(self.config.seed, NOISE_STREAM) if seed is None else seed
        rng = np.random.default_rng(seed)
        draws = f + rng.standard_normal(f.shape) * noise_sd[None, :]
        return PredictiveDistribution(draws, f)

    def _needs_refit(self, b):
        return False

    def _refit_draws(self, x, b):
        from . import fit_arrays

        n = self.train_y.shape[0]
        f = np.empty((x.shape[0], b))
        sd = np.empty(b)
        for k in range(b):
            rng = np.random.default_rng(derive_seed(self.config.seed, 1000 + k))
            rows = rng.integers(0, n, n)
            y = self.train_y[rows]
            if y.max() == y.min():
                rows = np.arange(n)
                y = self.train_y
            cfg = self.config.with_seed(derive_seed(self.config.seed, 2000 + k))
            m = fit_arrays(self.train_x[rows], y, self.predictor_names, cfg)
            f[:, k] = m._point(x)
            # a resample with duplicated rows understates the noise level
            sd[k] = np.sqrt(self.noise_variance)
        return f, sd

    # -- serialization -----------------------------------------------------

    def to_bytes(self):
        arrays = {"train_x": self.train_x, "train_y": self.train_y,
                  "importance": self._raw_importance}
        arrays.update(self._state())
        header = {
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            "config": self.config.to_dict(),
            "predictor_names": list(self.predictor_names),
            "info": self.info,
        }
        arrays["header"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
        buf = io.BytesIO()
        np.savez(buf, **arrays)
        return buf.getvalue()

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())


def model_from_bytes(blob):
    from .bart import BartModel
    from .forest import ForestModel

    with np.load(io.BytesIO(blob), allow_pickle=False) as z:
        arrays = {k: z[k] for k in z.files}
    header = json.loads(arrays.pop("header").tobytes().decode())
    if header.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported model format {header.get('format_version')}")
    cls = {BartModel.kind: BartModel, ForestModel.kind: ForestModel}[header["kind"]]
    model = cls.__new__(cls)
    FittedModel.__init__(
        model,
        RegressorConfig.from_dict(header["config"]),
        header["predictor_names"],
        arrays.pop("train_x"),
        arrays.pop("train_y"),
        arrays.pop("importance"),
        header["info"],
    )
    model._restore(arrays)
    return model


def load_model(path):
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
