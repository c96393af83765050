"""Sum-of-trees regression sampled by Bayesian backfitting.

The outcome is rescaled to ``[-0.5, 0.5]``. Each tree lives in a
fixed-size heap (children of slot ``s`` at ``2s+1`` and ``2s+2``); splits
are on a per-predictor grid of cut points and rows are pre-binned against
that grid, so a split test is an integer comparison. Per sweep every tree
gets one grow or prune proposal (Metropolis-Hastings against the depth
prior ``base * (1 + depth) ** -power``) followed by a conjugate draw of its
leaf means; then the error variance is drawn from its inverse-gamma full
conditional.
"""

from __future__ import annotations

import numpy as np
from scipy import stats
from scipy.linalg import solve_toeplitz

from .. import kernels
from ..kernels._fallback import ABSENT, LEAF
from .base import FittedModel, fit_metrics


def make_cuts(x, max_cuts):
    """Candidate split points: midpoints of unique values, or quantiles if too many."""
    u = np.unique(x)
    if u.size < 2:
        return np.empty(0)
    mids = (u[:-1] + u[1:]) / 2.0
    if mids.size > max_cuts:
        probs = np.arange(1, max_cuts + 1) / (max_cuts + 1)
        mids = np.unique(np.quantile(x, probs))
    return mids


def bin_rows(x, cuts):
    """Bin index per cell; ``x <= cuts[j][c]`` iff the bin index is ``<= c``."""
    xb = np.empty(x.shape, dtype=np.int32)
    for j, c in enumerate(cuts):
        xb[:, j] = np.searchsorted(c, x[:, j], side="left")
    return xb


def ols_residual_variance(x, y):
    n, p = x.shape
    if n <= p + 1:
        return float(y.var(ddof=1))
    a = np.column_stack([np.ones(n), x])
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = y - a @ coef
    return float(resid @ resid / (n - p - 1))


def spectrum0(x, max_order=None):
    """Spectral density at frequency zero from an AR fit chosen by AIC.

    Returns the long-run variance, so ``spectrum0(x) / len(x)`` is the
    variance of the sample mean of an autocorrelated series.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    xc = x - x.mean()
    gamma0 = float(xc @ xc) / n
    if gamma0 == 0.0:
        return 0.0
    max_order = max_order or min(n - 1, int(10 * np.log10(n)))
    acov = np.array([xc[: n - k] @ xc[k:] / n for k in range(max_order + 1)])
    best_aic, best = n * np.log(gamma0), gamma0
    for order in range(1, max_order + 1):
        phi = solve_toeplitz(acov[:order], acov[1: order + 1])
        innov = acov[0] - phi @ acov[1: order + 1]
        if innov <= 0:
            break
        aic = n * np.log(innov) + 2 * order
        if aic < best_aic:
            denom = 1.0 - phi.sum()
            if denom > 0:
                best_aic, best = aic, innov / (denom * denom)
    return float(best)


def geweke_z(trace, first=0.1, last=0.5):
    """Early-window mean minus late-window mean over its standard error.

    The long-run variance is estimated once, from the whole trace with each
    segment (early window, middle, late window) centered on its own mean:
    under stationarity the segments share one spectral density, a 10% window
    is too short to estimate it alone, and centering per segment keeps a
    mean shift between the windows from inflating the estimate.
    """
    n = trace.shape[0]
    i, j = max(2, int(first * n)), int((1.0 - last) * n)
    segments = (trace[:i], trace[i:j], trace[j:])
    centered = np.concatenate([seg - seg.mean() for seg in segments if seg.size])
    s0 = spectrum0(centered)
    a, b = segments[0], segments[2]
    se = np.sqrt(s0 / a.shape[0] + s0 / b.shape[0])
    if se == 0:
        return 0.0
    return float((a.mean() - b.mean()) / se)


class BartModel(FittedModel):
    kind = "bart_lite"

    @classmethod
    def fit(cls, x, y, names, cfg):
        bp = cfg.bart
        n, p = x.shape
        m = int(cfg.trees)
        slots = 2 ** (bp.max_depth + 1) - 1
        rng = np.random.default_rng(cfg.seed)

        y_min, y_max = float(y.min()), float(y.max())
        span = y_max - y_min
        yt = np.ascontiguousarray((y - y_min) / span - 0.5)
        cuts = [make_cuts(x[:, j], bp.max_cuts) for j in range(p)]
        xb = bin_rows(x, cuts)

        sigma_hat2 = max(ols_residual_variance(x, yt), 1e-12)
        nu = bp.sigma_df
        lam = sigma_hat2 * stats.chi2.ppf(1.0 - bp.sigma_quantile, nu) / nu
        tau = 0.5 / (bp.k * np.sqrt(cfg.node_scale))
        tau2 = tau * tau

        var = np.full((m, slots), ABSENT, dtype=np.int32)
        var[:, 0] = LEAF
        cut = np.zeros((m, slots), dtype=np.int32)
        val = np.zeros((m, slots))
        val[:, 0] = yt.mean() / m
        leaf_of = np.zeros((m, n), dtype=np.int32)
        fit = np.zeros(n)
        for j in range(m):
            fit += val[j, 0]
        sigma2 = sigma_hat2

        total = bp.burn_in + bp.draws * bp.thin
        sigma_trace = np.empty(total)
        accepted = 0
        kept_tree, kept_slot, kept_var, kept_cut, kept_val = [], [], [], [], []
        offsets = [0]
        kept_sigma2 = np.empty(bp.draws)
        fit_sum = np.zeros(n)
        split_counts = np.zeros(p, dtype=np.int64)

        for it in range(total):
            u = rng.random((m, 5))
            u[:, 4] = 1.0 - u[:, 4]
            width = int((var == LEAF).sum(axis=1).max()) + 2
            normals = rng.standard_normal((m, width))
            accepted += kernels.bart_sweep(
                xb, yt, fit, leaf_of, var, cut, val, u, normals,
                sigma2, tau2, bp.base, bp.power, bp.max_depth,
            )
            resid = yt - fit
            sse = float(np.cumsum(resid * resid)[-1])
            sigma2 = (nu * lam + sse) / 2.0 / rng.gamma((nu + n) / 2.0)
            sigma_trace[it] = sigma2
            if it >= bp.burn_in and (it - bp.burn_in) % bp.thin == bp.thin - 1:
                t, s = np.nonzero(var != ABSENT)
                kept_tree.append(t.astype(np.int32))
                kept_slot.append(s.astype(np.int32))
                kept_var.append(var[t, s])
                kept_cut.append(cut[t, s])
                kept_val.append(val[t, s])
                offsets.append(offsets[-1] + t.size)
                kept_sigma2[(it - bp.burn_in) // bp.thin] = sigma2
                fit_sum += fit
                v = var[var >= 0]
                split_counts += np.bincount(v, minlength=p)

        model = cls.__new__(cls)
        in_sample = (fit_sum / bp.draws + 0.5) * span + y_min
        post = kept_sigma2 * span * span
        info = {
            "acceptance_rate": accepted / (total * m),
            "sigma2_mean": float(post.mean()),
            "geweke_z": geweke_z(post) if post.size >= 20 else 0.0,
            "lambda": float(lam),
            "tau": float(tau),
            "train_fit": fit_metrics(y, in_sample),
            "backend": kernels.BACKEND,
        }
        FittedModel.__init__(model, cfg, names, x, y, split_counts, info)
        model.cuts = cuts
        model.y_min = y_min
        model.span = span
        model.slots = slots
        model.sigma2_trace = sigma_trace * span * span
        model.sigma2_draws = kept_sigma2 * span * span
        model.tree_idx = np.concatenate(kept_tree)
        model.slot_idx = np.concatenate(kept_slot)
        model.var_vals = np.concatenate(kept_var)
        model.cut_vals = np.concatenate(kept_cut)
        model.leaf_vals = np.concatenate(kept_val)
        model.offsets = np.asarray(offsets, dtype=np.int64)
        return model

    @property
    def draw_count(self):
        return self.offsets.shape[0] - 1

    @property
    def noise_variance(self):
        return float(self.sigma2_draws.mean())

    @property
    def stationary(self):
        return abs(self.info["geweke_z"]) <= 3.0

    def _dense(self, d):
        m = int(self.config.trees)
        lo, hi = self.offsets[d], self.offsets[d + 1]
        t, s = self.tree_idx[lo:hi], self.slot_idx[lo:hi]
        var = np.full((m, self.slots), ABSENT, dtype=np.int32)
        cut = np.zeros((m, self.slots), dtype=np.int32)
        val = np.zeros((m, self.slots))
        var[t, s] = self.var_vals[lo:hi]
        cut[t, s] = self.cut_vals[lo:hi]
        val[t, s] = self.leaf_vals[lo:hi]
        return var, cut, val

    def _f_matrix(self, x, which):
        xb = bin_rows(x, self.cuts)
        out = np.empty((x.shape[0], len(which)))
        for k, d in enumerate(which):
            out[:, k] = kernels.bart_predict(xb, *self._dense(int(d)))
        return (out + 0.5) * self.span + self.y_min

    def _f_draws(self, x, b):
        which = np.arange(b) * self.draw_count // b
        return self._f_matrix(x, which), np.sqrt(self.sigma2_draws[which])

    def _point(self, x):
        return self._f_matrix(x, range(self.draw_count)).mean(axis=1)

    def _state(self):
        state = {
            "sigma2_trace": self.sigma2_trace,
            "sigma2_draws": self.sigma2_draws,
            "tree_idx": self.tree_idx,
            "slot_idx": self.slot_idx,
            "var_vals": self.var_vals,
            "cut_vals": self.cut_vals,
            "leaf_vals": self.leaf_vals,
            "offsets": self.offsets,
            "scale": np.array([self.y_min, self.span, self.slots]),
        }
        for j, c in enumerate(self.cuts):
            state[f"cuts_{j}"] = c
        return state

    def _restore(self, a):
        for key in ("sigma2_trace", "sigma2_draws", "tree_idx", "slot_idx", "var_vals",
                    "cut_vals", "leaf_vals", "offsets"):
            setattr(self, key, a[key])
        self.y_min, self.span, slots = a["scale"]
        self.slots = int(slots)
        self.cuts = [a[f"cuts_{j}"] for j in range(self.predictor_count)]
