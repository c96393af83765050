"""Bagged regression trees.

Each tree is grown on a bootstrap resample with a random subset of at
least ``mtry`` candidate predictors per node. Variable importance is the
total decrease in squared error credited to each predictor. Predictive
draws are the predictions of individual trees; the out-of-bag mean squared
error is the noise level used when draws come from refitted forests.
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from .base import FittedModel, fit_metrics


class ForestModel(FittedModel):
    kind = "random_forest"

    @classmethod
    def fit(cls, x, y, names, cfg):
        n, p = x.shape
        rp = cfg.rf
        mtry = cfg.mtry_for(p)
        children = np.random.SeedSequence(cfg.seed).spawn(int(cfg.trees))
        parts = {k: [] for k in ("feature", "threshold", "left", "right", "value")}
        offsets = [0]
        importance = np.zeros(p)
        inbag = np.zeros((n, int(cfg.trees)), dtype=bool)
        for t, child in enumerate(children):
            rng = np.random.default_rng(child)
            sample = rng.integers(0, n, n) if rp.bootstrap else np.arange(n)
            inbag[sample, t] = True
            cap = 2 * (n // rp.min_node) + 1
            keys = rng.random((cap, p))
            feature, threshold, left, right, value, gain, _ = kernels.build_tree(
                x, y, sample, keys, mtry, rp.min_node, rp.max_depth
            )
            split = feature >= 0
            importance += np.bincount(feature[split], weights=gain[split], minlength=p)
            for k, arr in zip(parts, (feature, threshold, left, right, value)):
                parts[k].append(arr)
            offsets.append(offsets[-1] + feature.shape[0])

        model = cls.__new__(cls)
        model.feature = np.concatenate(parts["feature"])
        model.threshold = np.concatenate(parts["threshold"])
        model.left = np.concatenate(parts["left"])
        model.right = np.concatenate(parts["right"])
        model.value = np.concatenate(parts["value"])
        model.offsets = np.asarray(offsets, dtype=np.int64)

        per_tree = model._per_tree(x)
        oob = ~inbag
        counts = oob.sum(axis=1)
        has = counts > 0
        if rp.bootstrap and has.any():
            oob_pred = np.where(oob, per_tree, 0.0).sum(axis=1)[has] / counts[has]
            resid = y[has] - oob_pred
            noise = float(resid @ resid / has.sum())
            oob_metrics = fit_metrics(y[has], oob_pred)
        else:
            resid = y - per_tree.mean(axis=1)
            noise = float(resid @ resid / n)
            oob_metrics = None
        info = {
            "mtry": mtry,
            "oob_mse": noise,
            "oob": oob_metrics,
            "mean_nodes": float(np.diff(model.offsets).mean()),
            "backend": kernels.BACKEND,
        }
        FittedModel.__init__(model, cfg, names, x, y, importance, info)
        return model

    @property
    def tree_count(self):
        return self.offsets.shape[0] - 1

    @property
    def noise_variance(self):
        return self.info["oob_mse"]

    def _per_tree(self, x):
        return kernels.predict_trees(
            x, self.feature, self.threshold, self.left, self.right, self.value, self.offsets
        )

    def _needs_refit(self, b):
        return b > self.tree_count

    def _f_draws(self, x, b):
        which = np.arange(b) * self.tree_count // b
        # an unpruned tree's leaf mean already carries outcome noise
        return self._per_tree(x)[:, which], np.zeros(b)

    def _point(self, x):
        return self._per_tree(x).mean(axis=1)

    def _state(self):
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left,
            "right": self.right,
            "value": self.value,
            "offsets": self.offsets,
        }

    def _restore(self, a):
        for key in ("feature", "threshold", "left", "right", "value", "offsets"):
            setattr(self, key, a[key])
