"""Unusually low (or high) unit predictions.

A unit is an outlier when its mean prediction lies more than ``K`` spreads
from the center of all units' mean predictions. Two center/spread pairs
are offered: mean and standard deviation, or median and the median
absolute deviation scaled by 1.4826 (so ``K`` means the same for normal
data under both rules).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DataError
from ..regressors.distribution import PredictiveDistribution

MAD_SCALE = 1.4826
_KINDS = {"sd": "sd", "sd_from_mean": "sd", "mad": "mad", "mad_from_median": "mad"}
TAILS = ("lower", "upper", "both")


class DiagnosticWarning(UserWarning):
    pass


@dataclass(frozen=True)
class OutlierRule:
    """Center/spread rule with multiplier ``multiplier`` on tail ``tail``.

    ``kind`` accepts ``"sd"``/``"sd_from_mean"`` and
    ``"mad"``/``"mad_from_median"``; it is stored in the short form.
    """

    kind: str = "sd"
    multiplier: float = 2.0
    tail: str = "lower"

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError("rule", f"unknown rule {self.kind!r}; use 'sd' or 'mad'")
        object.__setattr__(self, "kind", _KINDS[self.kind])
        if not self.multiplier > 0:
            raise ConfigError("k_mult", f"must be positive, got {self.multiplier}")
        if self.tail not in TAILS:
            raise ConfigError("tail", f"must be one of {TAILS}")

    def to_dict(self):
        return {
            "kind": self.kind,
            "multiplier": float(self.multiplier),
            "tail": self.tail,
            "mad_scale": MAD_SCALE if self.kind == "mad" else None,
        }


@dataclass(frozen=True, eq=False)
class OutlierResult:
    """Flags per unit plus the statistics they were derived from.

    ``low`` is the 0/1 indicator of a mean prediction below the lower
    bound, whatever tail was requested for ``flags``.
    """

    flags: np.ndarray
    low: np.ndarray
    center: float
    spread: float
    lower: float
    upper: float
    rule: OutlierRule

    @property
    def share(self):
        return float(self.flags.mean())

    def to_dict(self):
        return {
            "rule": self.rule.to_dict(),
            "center": self.center,
            "spread": self.spread,
            "lower_bound": self.lower,
            "upper_bound": self.upper,
            "flagged_count": int(self.flags.sum()),
            "flagged_share": self.share,
        }


def _unit_means(p):
    means = p.mean if isinstance(p, PredictiveDistribution) else p
    means = np.asarray(means, dtype=np.float64)
    if means.ndim != 1:
        raise DataError("expected one mean prediction per unit")
    return means


def center_spread(values, kind):
    if kind == "sd":
        return float(values.mean()), float(values.std(ddof=1))
    med = float(np.median(values))
    return med, MAD_SCALE * float(np.median(np.abs(values - med)))


def detect_outliers(p, rule=None, pool=None):
    """Flag units whose mean prediction is far from the pooled center.

    Parameters
    ----------
    p : PredictiveDistribution or array
        Per-unit predictions; a distribution contributes its unit means.
    rule : OutlierRule, optional
        Defaults to 2 standard deviations below the mean.
    pool : boolean array, optional
        Units the center and spread are computed from (all by default).

    Returns
    -------
    OutlierResult
    """
    rule = rule or OutlierRule()
    means = _unit_means(p)
    ref = means if pool is None else means[np.asarray(pool, dtype=bool)]
    if ref.shape[0] < 3:
        raise DataError(f"at least 3 units are needed, got {ref.shape[0]}")
    if not np.isfinite(means).all():
        raise DataError("mean predictions must be finite")
    center, spread = center_spread(ref, rule.kind)
    lower = center - rule.multiplier * spread
    upper = center + rule.multiplier * spread
    if not spread > 0:
        warnings.warn("predictions have zero dispersion; no unit is flagged", DiagnosticWarning)
        none = np.zeros(means.shape[0], dtype=bool)
        return OutlierResult(none, none.astype(np.int8), center, 0.0, center, center, rule)
    below = means < lower
    above = means > upper
    flags = {"lower": below, "upper": above, "both": below | above}[rule.tail]
    return OutlierResult(flags, below.astype(np.int8), center, spread, lower, upper, rule)


def detect_outliers_by_split(p, split, rule=None, pooled=True):
    """Outlier flags with statistics pooled over all units or per split label.

    Returns the flags, the low indicator and a dict of per-group results.
    """
    means = _unit_means(p)
    split = np.asarray(split)
    if pooled:
        res = detect_outliers(means, rule)
        return res.flags, res.low, {"pooled": res}
    flags = np.zeros(means.shape[0], dtype=bool)
    low = np.zeros(means.shape[0], dtype=np.int8)
    groups = {}
    for label in sorted(set(split.tolist())):
        rows = split == label
        res = detect_outliers(means[rows], rule)
        flags[rows] = res.flags
        low[rows] = res.low
        groups[label] = res
    return flags, low, groups
