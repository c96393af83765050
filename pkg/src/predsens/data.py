"""Tabular datasets: loading, validation, imputation and moment estimation.

A :class:`Dataset` holds numeric columns (categorical levels are integer
coded), one of which is the outcome. Rows whose outcome is missing form the
*target* split; the remaining rows form the *study* split on which models
are trained.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError

MISSING_TOKENS = ("", "NA")
STUDY = "study"
TARGET = "target"


def _readonly(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable column-typed table with a designated outcome.

    Parameters
    ----------
    names : tuple of str
        Column names, outcome included, split column excluded.
    values : (n, c) float array
        Cell values; ``nan`` marks a missing cell.
    outcome_name : str
        Name of the outcome column.
    kinds : tuple of str
        ``"continuous"`` or ``"categorical"`` per column.
    levels : dict
        For categorical columns, the level label of each integer code.
    split : (n,) array of str, optional
        ``"study"`` or ``"target"`` per row. Derived from outcome
        missingness when omitted.
    groups : (n,) array of str, optional
        Raw values of the split column, kept for reporting.
    split_name : str, optional
        Name of the split column in the source file.
    """

    names: tuple
    values: np.ndarray
    outcome_name: str
    kinds: tuple = None
    levels: dict = field(default_factory=dict)
    split: np.ndarray = None
    groups: np.ndarray = None
    split_name: str = None

    def __post_init__(self):
        names = tuple(self.names)
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != len(names):
            raise DataError(f"values shape {values.shape} does not match {len(names)} columns")
        if len(set(names)) != len(names):
            raise DataError("duplicate column names")
        if self.outcome_name not in names:
            raise DataError(f"outcome column {self.outcome_name!r} not found")
        if len(names) < 2:
            raise DataError("at least one predictor column is required")
        if values.shape[0] < 2:
            raise DataError("at least two rows are required")
        kinds = tuple(self.kinds) if self.kinds is not None else ("continuous",) * len(names)
        if len(kinds) != len(names):
            raise DataError("one kind per column is required")
        y_missing = np.isnan(values[:, names.index(self.outcome_name)])
        if self.split is None:
            split = np.where(y_missing, TARGET, STUDY)
        else:
            split = np.asarray(self.split).astype(str)
            if split.shape != (values.shape[0],) or not np.isin(split, (STUDY, TARGET)).all():
                raise DataError("split labels must be 'study' or 'target', one per row")
            bad = (split == STUDY) & y_missing
            if bad.any():
                raise DataError(
                    f"outcome {self.outcome_name!r} is missing on {int(bad.sum())} study rows"
                )
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "split", _readonly(split))
        if self.groups is not None:
            object.__setattr__(self, "groups", _readonly(np.asarray(self.groups).astype(str)))

    # -- shape -------------------------------------------------------------

    @property
    def row_count(self):
        return self.values.shape[0]

    @property
    def predictor_names(self):
        return tuple(n for n in self.names if n != self.outcome_name)

    @property
    def predictor_count(self):
        return len(self.names) - 1

    @property
    def missing_mask(self):
        return np.isnan(self.values)

    def column(self, name):
        return self.values[:, self.names.index(name)]

    @property
    def outcome(self):
        return self.column(self.outcome_name)

    @property
    def predictors(self):
        idx = [i for i, n in enumerate(self.names) if n != self.outcome_name]
        return self.values[:, idx]

    @property
    def is_study(self):
        return self.split == STUDY

    @property
    def is_target(self):
        return self.split == TARGET

    def split_counts(self):
        return {STUDY: int(self.is_study.sum()), TARGET: int(self.is_target.sum())}

    # -- derived datasets ----------------------------------------------------

    def subset(self, rows):
        """Rows selected by a boolean mask or index array."""
        rows = np.asarray(rows)
        groups = None if self.groups is None else self.groups[rows]
        return replace(self, values=self.values[rows], split=self.split[rows], groups=groups)

    def study(self):
        return self.subset(self.is_study)

    def target(self):
        return self.subset(self.is_target)

    def drop(self, *names):
        keep = [i for i, n in enumerate(self.names) if n not in names]
        if self.outcome_name in names:
            raise DataError("cannot drop the outcome column")
        return replace(
            self,
            names=tuple(self.names[i] for i in keep),
            values=self.values[:, keep],
            kinds=tuple(self.kinds[i] for i in keep),
            levels={k: v for k, v in self.levels.items() if k not in names},
        )

    def with_outcome(self, name, drop=()):
        """Use column ``name`` as the outcome, keeping the split labels.

        The previous outcome column is dropped, as are the columns in
        ``drop``.
        """
        if name not in self.names:
            raise DataError(f"column {name!r} not found")
        removed = {self.outcome_name, *drop} - {name}
        keep = [i for i, n in enumerate(self.names) if n not in removed]
        values = self.values[:, keep]
        names = tuple(self.names[i] for i in keep)
        y_missing = np.isnan(values[:, names.index(name)])
        if (y_missing & self.is_study).any():
            raise DataError(f"column {name!r} has missing cells on study rows")
        return Dataset(
            names=names,
            values=values,
            outcome_name=name,
            kinds=tuple(self.kinds[i] for i in keep),
            levels={k: v for k, v in self.levels.items() if k in names},
            split=self.split,
            groups=self.groups,
            split_name=self.split_name,
        )

    def with_column(self, name, values, position=None, kind="continuous"):
        """Dataset with one more column (inserted before ``position``)."""
        if name in self.names:
            raise DataError(f"column {name!r} already exists")
        values = np.asarray(values, dtype=np.float64).reshape(-1, 1)
        if values.shape[0] != self.row_count:
            raise DataError("new column has the wrong length")
        pos = len(self.names) if position is None else position
        names = self.names[:pos] + (name,) + self.names[pos:]
        kinds = self.kinds[:pos] + (kind,) + self.kinds[pos:]
        new = np.hstack([self.values[:, :pos], values, self.values[:, pos:]])
        return replace(self, names=names, values=new, kinds=kinds)

    def metadata(self):
        """JSON-ready description: columns, kinds, split counts, missingness."""
        miss = self.missing_mask.sum(axis=0)
        return {
            "outcome": self.outcome_name,
            "split_column": self.split_name,
            "rows": self.row_count,
            "predictors": self.predictor_count,
            "split_counts": self.split_counts(),
            "columns": [
                {
                    "name": n,
                    "kind": k,
                    "missing": int(m),
                    **({"levels": list(self.levels[n])} if n in self.levels else {}),
                }
                for n, k, m in zip(self.names, self.kinds, miss)
            ],
        }

    def metadata_json(self):
        return json.dumps(self.metadata(), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# CSV input/output
# ---------------------------------------------------------------------------

def _parse(cell, missing):
    if cell in missing:
        return math.nan, True
    try:
        v = float(cell)
    except ValueError:
        return None, False
    return v, math.isnan(v)


def load_csv(path, outcome_name, split_column=None, categorical=(), missing=MISSING_TOKENS):
    """Read a CSV file with a header row into a :class:`Dataset`.

    Columns whose non-missing cells are all non-numeric, or that are listed
    in ``categorical``, are integer coded by sorted level label. A column
    mixing numbers with non-numeric text is rejected.

    The split is taken from ``split_column`` when given: labels ``study`` and
    ``target`` are used as is, any other group whose outcome is entirely
    missing becomes ``target``. Without a split column, rows with a missing
    outcome are the target split.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    header = [h.strip() for h in header]
    if len(set(header)) != len(header):
        dup = sorted({h for h in header if header.count(h) > 1})
        raise DataError(f"duplicate column names: {dup}")
    if outcome_name not in header:
        raise DataError(f"outcome column {outcome_name!r} not found")
    if split_column is not None and split_column not in header:
        raise DataError(f"split column {split_column!r} not found")
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise DataError(f"row {i + 2}: expected {len(header)} cells, found {len(r)}")
    categorical = set(categorical)

    names, kinds, cols, levels = [], [], [], {}
    groups = None
    for j, name in enumerate(header):
        cells = [r[j] for r in rows]
        if name == split_column:
            groups = np.array(cells, dtype=str)
            continue
        parsed = [_parse(c, missing) for c in cells]
        bad = [i for i, (v, _) in enumerate(parsed) if v is None]
        is_cat = name in categorical or (bad and len(bad) == sum(1 for c in cells if c not in missing))
        if is_cat and name == outcome_name:
            raise DataError(f"outcome column {outcome_name!r} must be numeric")
        if is_cat:
            labels = sorted({c for c in cells if c not in missing})
            code = {lab: float(k) for k, lab in enumerate(labels)}
            col = [math.nan if c in missing else code[c] for c in cells]
            levels[name] = tuple(labels)
            kinds.append("categorical")
        else:
            if bad:
                i = bad[0]
                raise DataError(f"column {name!r}, row {i + 2}: cannot parse {cells[i]!r}")
            col = [v for v, _ in parsed]
            kinds.append("continuous")
        names.append(name)
        cols.append(col)

    values = np.array(cols, dtype=np.float64).T if cols else np.empty((len(rows), 0))
    split = None
    if groups is not None:
        y = values[:, names.index(outcome_name)]
        split = np.empty(len(rows), dtype=object)
        for g in np.unique(groups):
            sel = groups == g
            if g.lower() in (STUDY, TARGET):
                split[sel] = g.lower()
            else:
                split[sel] = TARGET if np.isnan(y[sel]).all() else STUDY
        split = split.astype(str)
    return Dataset(
        names=tuple(names),
        values=values,
        outcome_name=outcome_name,
        kinds=tuple(kinds),
        levels=levels,
        split=split,
        groups=groups,
        split_name=split_column,
    )


def write_csv(d, path):
    """Write ``d`` back to CSV; values round-trip exactly through :func:`load_csv`."""
    header = list(d.names)
    if d.split_name is not None:
        header.append(d.split_name)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(d.row_count):
            row = []
            for j, name in enumerate(d.names):
                v = d.values[i, j]
                if math.isnan(v):
                    row.append("")
                elif name in d.levels:
                    row.append(d.levels[name][int(v)])
                else:
                    row.append(repr(float(v)))
            if d.split_name is not None:
                row.append(d.groups[i] if d.groups is not None else d.split[i])
            w.writerow(row)


# ---------------------------------------------------------------------------
# Imputation
# ---------------------------------------------------------------------------

def impute_simple(d):
    """Fill missing predictor cells: column mean, or modal code for categoricals.

    The outcome is never imputed. Ties between modal codes go to the
    smallest code.
    """
    values = np.array(d.values, copy=True)
    for j, (name, kind) in enumerate(zip(d.names, d.kinds)):
        if name == d.outcome_name:
            continue
        col = values[:, j]
        miss = np.isnan(col)
        if not miss.any():
            continue
        if miss.all():
            raise DataError(f"predictor {name!r} is entirely missing")
        obs = col[~miss]
        if kind == "categorical":
            codes, counts = np.unique(obs, return_counts=True)
            fill = codes[np.argmax(counts)]
        else:
            fill = obs.mean()
        col[miss] = fill
    return replace(d, values=values)


# ---------------------------------------------------------------------------
# Moments and standardization
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MomentSummary:
    """Column means, sample standard deviations and Pearson correlations."""

    names: tuple
    means: np.ndarray
    sds: np.ndarray
    correlation: np.ndarray
    degenerate: np.ndarray

    def to_dict(self):
        return {
            "names": list(self.names),
            "means": self.means.tolist(),
            "sds": self.sds.tolist(),
            "correlation": self.correlation.tolist(),
            "degenerate": self.degenerate.tolist(),
        }


def _is_degenerate(sd, mean):
    return sd <= 1e-12 * np.maximum(1.0, np.abs(mean))


def correlation_matrix(a):
    """Pearson correlation of the columns of ``a`` (no missing cells).

    Zero-variance columns get zero off-diagonal correlation. Returns the
    matrix and the degeneracy flags.
    """
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    if n < 2:
        raise DataError("at least two rows are needed for correlations")
    mean = a.mean(axis=0)
    c = a - mean
    sd = np.sqrt((c * c).sum(axis=0) / (n - 1))
    degenerate = _is_degenerate(sd, mean)
    scale = np.where(degenerate, 1.0, sd)
    z = c / scale
    k = z.T @ z / (n - 1)
    k = (k + k.T) / 2.0
    k[degenerate, :] = 0.0
    k[:, degenerate] = 0.0
    np.clip(k, -1.0, 1.0, out=k)
    np.fill_diagonal(k, 1.0)
    return k, degenerate


def moments_matrix(a, names):
    a = np.asarray(a, dtype=np.float64)
    if np.isnan(a).any():
        raise DataError("moments require complete columns")
    corr, degenerate = correlation_matrix(a)
    return MomentSummary(
        names=tuple(names),
        means=a.mean(axis=0),
        sds=a.std(axis=0, ddof=1),
        correlation=corr,
        degenerate=degenerate,
    )


def moments(d, include_outcome=True):
    """Moment summary of the predictors (and outcome, as column 0).

    With the outcome included only study rows are used, otherwise all rows.
    """
    if include_outcome:
        s = d.study()
        a = np.column_stack([s.outcome, s.predictors])
        names = (d.outcome_name,) + d.predictor_names
    else:
        a = d.predictors
        names = d.predictor_names
    return moments_matrix(a, names)


@dataclass(frozen=True, eq=False)
class Standardization:
    """Stored location/scale used to undo :func:`standardize_matrix`."""

    means: np.ndarray
    sds: np.ndarray
    degenerate: np.ndarray

    def invert(self, z):
        scale = np.where(self.degenerate, 1.0, self.sds)
        return z * scale + self.means


def standardize_matrix(a):
    """Center and scale columns (sd with ``n - 1``), ignoring missing cells.

    Zero-variance columns are only centered and flagged as degenerate.
    """
    a = np.asarray(a, dtype=np.float64)
    means = np.nanmean(a, axis=0)
    c = a - means
    n_obs = (~np.isnan(a)).sum(axis=0)
    sds = np.sqrt(np.nansum(c * c, axis=0) / np.maximum(n_obs - 1, 1))
    degenerate = _is_degenerate(sds, means)
    z = c / np.where(degenerate, 1.0, sds)
    z[:, degenerate] = np.where(np.isnan(z[:, degenerate]), np.nan, 0.0)
    return z, Standardization(means=means, sds=sds, degenerate=degenerate)


def standardize(d):
    """Standardize every column of ``d``; returns the new dataset and the scaling."""
    z, st = standardize_matrix(d.values)
    return replace(d, values=z), st
