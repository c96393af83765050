"""Bundled synthetic demo data, so every command runs out of the box.

Data-generating process (``make_demo``), 1500 rows:

* ``region``: ``north`` (1000 rows, outcome observed, the study split) and
  ``south`` (500 rows, outcome missing, the target split);
* ``x1`` ... ``x6``: Gaussian with AR(1) correlation 0.4; ``x1`` is shifted
  by -0.3 in the south;
* ``school``: categorical ``public``/``private`` (30% private);
* ``math``: proxy outcome on both splits,
  ``500 + 70 (0.8 a + 0.6 e1)`` with ``a`` a standardized linear index of
  the ``x``;
* ``score``: the outcome,
  ``480 + 75 (0.5 a + 0.3 sin(1.5 x1) + 0.55 e2) + 20 [x2 > 1] + 15 [private]``,
  missing in the south.

The linear R^2 of ``score`` on the predictors is about 0.6, so synthetic
correlations up to 0.5 are attainable.
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from .data import Dataset, load_csv, write_csv

OUTCOME = "score"
SPLIT_COLUMN = "region"
PROXY = "math"
SEED = 2015


def demo_path():
    """Path of the bundled CSV."""
    return resources.files("predsens") / "data" / "demo.csv"


def make_demo(seed=SEED, n_study=1000, n_target=500):
    rng = np.random.default_rng(seed)
    n, p = n_study + n_target, 6
    south = np.arange(n) >= n_study
    c = 0.4 ** np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    x = rng.standard_normal((n, p)) @ np.linalg.cholesky(c).T
    x[south, 0] -= 0.3
    private = (rng.random(n) < 0.3).astype(np.float64)
    a = x @ np.array([1.0, 0.8, 0.6, 0.4, 0.2, 0.0])
    a = (a - a.mean()) / a.std()
    math_ = 500 + 70 * (0.8 * a + 0.6 * rng.standard_normal(n))
    score = (480 + 75 * (0.5 * a + 0.3 * np.sin(1.5 * x[:, 0]) + 0.55 * rng.standard_normal(n))
             + 20 * (x[:, 1] > 1) + 15 * private)
    score[south] = np.nan
    names = ("score", "math", "x1", "x2", "x3", "x4", "x5", "x6", "school")
    school = 1.0 - private  # codes follow sorted labels: 0 private, 1 public
    values = np.column_stack([np.round(score, 2), np.round(math_, 2), np.round(x, 4), school])
    kinds = ("continuous",) * 8 + ("categorical",)
    groups = np.where(south, "south", "north")
    return Dataset(
        names=names,
        values=values,
        outcome_name=OUTCOME,
        kinds=kinds,
        levels={"school": ("private", "public")},
        split=np.where(south, "target", "study"),
        groups=groups,
        split_name=SPLIT_COLUMN,
    )


def load_demo():
    with resources.as_file(demo_path()) as path:
        return load_csv(path, OUTCOME, SPLIT_COLUMN)


def write_demo(path, seed=SEED):
    write_csv(make_demo(seed), path)


if __name__ == "__main__":  # regenerate the bundled file
    import sys

    write_demo(sys.argv[1] if len(sys.argv) > 1 else "demo.csv")
