"""Covariate overlap between the study and target splits.

The overlap score of a unit is the fitted probability that it belongs to
the study split given its predictors, from a ridge-stabilized logistic
regression. Units whose score lies outside the range of the other split's
scores have no comparable counterpart and can be trimmed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import expit

from ..errors import DataError
from .outliers import DiagnosticWarning

RIDGE = 1e-6
GRAD_TOL = 1e-8
MAX_ITER = 100
_CLIP = 1e-12


def logistic_irls(x, s, ridge=RIDGE, tol=GRAD_TOL, max_iter=MAX_ITER):
    """Penalized logistic regression by Newton (IRLS) iterations.

    The intercept is unpenalized. Iterations stop once the gradient norm of
    the penalized log-likelihood is at most ``tol``.

    Returns
    -------
    beta : (p + 1,) intercept first
    iterations : int
    converged : bool
    """
    n, p = x.shape
    a = np.column_stack([np.ones(n), x])
    pen = np.full(p + 1, ridge)
    pen[0] = 0.0
    beta = np.zeros(p + 1)
    mean = s.mean()
    beta[0] = np.log(mean / (1.0 - mean))
    for it in range(1, max_iter + 1):
        mu = expit(a @ beta)
        grad = a.T @ (s - mu) - pen * beta
        if np.linalg.norm(grad) <= tol:
            return beta, it - 1, True
        w = mu * (1.0 - mu)
        h = (a * w[:, None]).T @ a + np.diag(pen)
        try:
            step = np.linalg.solve(h, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(h, grad, rcond=None)[0]
        beta = beta + step
    mu = expit(a @ beta)
    grad = a.T @ (s - mu) - pen * beta
    return beta, max_iter, bool(np.linalg.norm(grad) <= tol)


def auc(scores, labels):
    """Area under the ROC curve (Mann-Whitney form, ties count half)."""
    labels = np.asarray(labels, dtype=bool)
    n1, n0 = int(labels.sum()), int((~labels).sum())
    ranks = stats.rankdata(scores)
    return float((ranks[labels].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def _design(d):
    """Predictor matrix with categorical columns dummy coded (first level dropped)."""
    cols, names = [], []
    for name, kind in zip(d.names, d.kinds):
        if name == d.outcome_name:
            continue
        v = d.column(name)
        if kind == "categorical":
            for code in np.unique(v)[1:]:
                cols.append((v == code).astype(np.float64))
                labels = d.levels.get(name)
                names.append(f"{name}=={labels[int(code)] if labels else int(code)}")
        else:
            cols.append(v)
            names.append(name)
    return np.column_stack(cols), tuple(names)


@dataclass(frozen=True, eq=False)
class OverlapReport:
    """Scores, trimming flags and fit summary.

    ``coefficients`` are on the predictors' original scale, intercept first.
    """

    scores: np.ndarray
    in_study: np.ndarray
    trimmed: np.ndarray
    coefficients: np.ndarray
    coefficient_names: tuple
    auc: float
    iterations: int
    converged: bool
    ridge: float

    @property
    def trimmed_share(self):
        return float(self.trimmed.mean())

    def to_dict(self):
        tgt = ~self.in_study
        return {
            "auc": self.auc,
            "ridge": self.ridge,
            "ridge_note": "penalty ridge * ||beta||^2 / 2 on the standardized-predictor coefficients, intercept excluded",
            "iterations": self.iterations,
            "converged": self.converged,
            "coefficients": dict(zip(("(intercept)",) + self.coefficient_names,
                                     map(float, self.coefficients))),
            "trimmed_share": self.trimmed_share,
            "trimmed_study": int((self.trimmed & self.in_study).sum()),
            "trimmed_target": int((self.trimmed & tgt).sum()),
            "study_score_range": [float(self.scores[self.in_study].min()),
                                  float(self.scores[self.in_study].max())],
            "target_score_range": [float(self.scores[tgt].min()), float(self.scores[tgt].max())],
        }


def overlap_score(d, ridge=RIDGE):
    """Fit study-membership probabilities and flag non-overlapping units.

    A target unit is trimmed when its score is above the largest or below
    the smallest study score; study units are trimmed symmetrically against
    the target scores.
    """
    s = d.is_study.astype(np.float64)
    if s.sum() == 0 or s.sum() == s.size:
        raise DataError("overlap needs both study and target rows")
    x, names = _design(d)
    if np.isnan(x).any():
        raise DataError("predictors have missing cells; impute first")
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    z = (x - mu) / sd
    beta_z, iters, converged = logistic_irls(z, s, ridge)
    scores = np.clip(expit(np.column_stack([np.ones(len(s)), z]) @ beta_z), _CLIP, 1.0 - _CLIP)
    coef = beta_z.copy()
    coef[1:] = beta_z[1:] / sd
    coef[0] = beta_z[0] - float(coef[1:] @ mu)

    study = s == 1.0
    ss, ts = scores[study], scores[~study]
    trimmed = np.where(study, (scores > ts.max()) | (scores < ts.min()),
                       (scores > ss.max()) | (scores < ss.min()))
    a = auc(scores, study)
    if not converged:
        warnings.warn(f"overlap logistic fit did not converge in {iters} iterations",
                      DiagnosticWarning)
    if a >= 1.0:
        warnings.warn("study and target splits are perfectly separated; every target unit "
                      "lies outside the study support and would be trimmed", DiagnosticWarning)
    return OverlapReport(scores, study, trimmed, coef, names, a, iters, converged, ridge)
