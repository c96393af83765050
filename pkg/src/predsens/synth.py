"""Synthetic predictor with a prescribed correlation structure.

The outcome ``Y``, a raw standard-normal draw and the observed predictors
``X`` are stacked column-wise as ``[Y, R~, X_1..X_P]``, standardized,
whitened with the Cholesky factor of their empirical correlation, recolored
with the Cholesky factor of a target correlation matrix, mapped back to the
original location/scale, and column 1 is extracted.

Both factorizations order the synthetic slot *last*. With a lower-triangular
factor the columns before the synthetic slot are then reproduced exactly by
whiten-then-recolor, so the extracted column has the target correlations
with the original, untouched ``Y`` and ``X``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack, solve_triangular

from .data import correlation_matrix, standardize_matrix
from .errors import DataError, NotPSDError
from .utils import derive_seed

SHIFT_SCHEDULE = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)
OUTCOME, SYNTHETIC, PREDICTOR = "outcome", "synthetic", "predictor"
SYNTHETIC_COLUMN = 1


class SynthWarning(UserWarning):
    """Achieved correlations missed their targets by more than the tolerance."""


class NumericalRankError(NotPSDError):
    """Too few rows for the residualization construction."""


def tolerance(n):
    """Sampling tolerance for achieved correlations at ``n`` rows."""
    return max(0.02, 3.0 / np.sqrt(n))


@dataclass(frozen=True)
class CorrelationSpec:
    """Target correlations of the synthetic predictor.

    ``rho_predictors`` defaults to zeros when ``None``.
    """

    rho_outcome: float
    rho_predictors: tuple | None = None
    tikhonov_alpha: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not -1.0 < self.rho_outcome < 1.0:
            raise ValueError(f"rho_outcome must lie in (-1, 1), got {self.rho_outcome}")
        if self.rho_predictors is not None:
            rp = tuple(float(v) for v in self.rho_predictors)
            if any(not -1.0 < v < 1.0 for v in rp):
                raise ValueError("rho_predictors entries must lie in (-1, 1)")
            object.__setattr__(self, "rho_predictors", rp)
        if self.tikhonov_alpha < 0:
            raise ValueError("tikhonov_alpha must be nonnegative")

    def predictor_targets(self, p):
        if self.rho_predictors is None:
            return np.zeros(p)
        if len(self.rho_predictors) != p:
            raise ValueError(f"rho_predictors has {len(self.rho_predictors)} entries, expected {p}")
        return np.array(self.rho_predictors)

    def to_dict(self):
        return {
            "rho_outcome": self.rho_outcome,
            "rho_predictors": None if self.rho_predictors is None else list(self.rho_predictors),
            "tikhonov_alpha": self.tikhonov_alpha,
            "seed": self.seed,
        }


@dataclass(frozen=True, eq=False)
class StackedMatrix:
    """``N x (P+2)`` matrix ordered ``[Y, R~, X_1..X_P]``."""

    data: np.ndarray
    names: tuple = ()
    shift_used: float = 0.0
    column_roles: tuple = field(init=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] < 3:
            raise ValueError("a stacked matrix needs the outcome, synthetic and >= 1 predictor columns")
        object.__setattr__(self, "data", data)
        roles = (OUTCOME, SYNTHETIC) + (PREDICTOR,) * (data.shape[1] - 2)
        object.__setattr__(self, "column_roles", roles)
        if not self.names:
            names = ("Y", "R") + tuple(f"X{j + 1}" for j in range(data.shape[1] - 2))
            object.__setattr__(self, "names", names)

    @classmethod
    def stack(cls, y, r_raw, x, names=None):
        x = np.asarray(x, dtype=np.float64).reshape(len(y), -1)
        return cls(np.column_stack([y, r_raw, x]), names=tuple(names or ()))

    @property
    def synthetic(self):
        return self.data[:, SYNTHETIC_COLUMN]


@dataclass(frozen=True, eq=False)
class SynthResult:
    """Synthetic predictor and its achieved correlations with the original data."""

    r: np.ndarray
    achieved_outcome: float
    achieved_predictors: np.ndarray
    target_spec: CorrelationSpec
    shift_used: float
    whiten_shift: float = 0.0
    tol: float = 0.0
    predictor_names: tuple = ()
    degenerate: np.ndarray = None
    method: str = "cholesky"

    @property
    def achieved_correlations(self):
        return {"outcome": self.achieved_outcome, "predictors": self.achieved_predictors}

    def max_abs_error(self):
        p = len(self.achieved_predictors)
        err = [abs(self.achieved_outcome - self.target_spec.rho_outcome)]
        err.extend(np.abs(self.achieved_predictors - self.target_spec.predictor_targets(p)))
        return float(max(err))

    def within_tolerance(self):
        return self.max_abs_error() <= self.tol

    def to_dict(self):
        return {
            "method": self.method,
            "target": self.target_spec.to_dict(),
            "achieved": {
                "outcome": float(self.achieved_outcome),
                "predictors": dict(zip(self.predictor_names, map(float, self.achieved_predictors))),
            },
            "shift_used": self.shift_used,
            "whiten_shift": self.whiten_shift,
            "tolerance": self.tol,
            "within_tolerance": bool(self.within_tolerance()),
            "seed": self.target_spec.seed,
            "n": int(self.r.shape[0]),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write_csv(self, path, name="R"):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(name + "\n")
            for v in self.r:
                fh.write(repr(float(v)) + "\n")


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def draw_raw(n, seed):
    """``n`` i.i.d. standard-normal draws, reproducible from ``seed``."""
    if n < 2:
        raise ValueError("need at least two draws")
    return np.random.default_rng(seed).standard_normal(n)


def cholesky_psd(m, alpha0=0.0):
    """Lower Cholesky factor of ``m + shift * I`` with the smallest workable shift.

    Shifts are tried from ``alpha0`` upwards through :data:`SHIFT_SCHEDULE`.

    Returns
    -------
    L : ndarray
        Lower-triangular factor, ``L @ L.T == m + shift * I``.
    shift : float
        The shift that was applied.

    Raises
    ------
    NotPSDError
        If the factorization fails at every shift.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-10):
        raise ValueError("matrix must be symmetric")
    shifts = [alpha0] + [s for s in SHIFT_SCHEDULE if s > alpha0]
    eye = np.eye(m.shape[0])
    info = 0
    for shift in shifts:
        c, info = lapack.dpotrf(m + shift * eye, lower=1, clean=1)
        if info == 0:
            return c, float(shift)
    raise NotPSDError(
        f"matrix is not positive definite even with shift {shifts[-1]:g}: "
        f"leading minor of order {info} is not positive",
        minor=int(info),
    )


def _synthetic_last(k):
    """Column permutation putting the synthetic slot last, and its inverse."""
    perm = np.r_[0, np.arange(2, k), SYNTHETIC_COLUMN]
    return perm, np.argsort(perm)


def whiten(s, alpha0=0.0):
    """Decorrelate a centered and scaled stacked matrix.

    Right-multiplies the data by the inverse transpose of the Cholesky factor
    of its empirical correlation matrix (synthetic slot factored last), via a
    triangular solve. The result has identity empirical correlation.
    """
    perm, inv = _synthetic_last(s.data.shape[1])
    k_hat, _ = correlation_matrix(s.data)
    L, shift = cholesky_psd(k_hat[np.ix_(perm, perm)], alpha0)
    zp = solve_triangular(L, s.data[:, perm].T, lower=True).T
    return StackedMatrix(zp[:, inv], names=s.names, shift_used=shift)


def target_matrix(spec, k_hat):
    """Target correlation matrix: ``k_hat`` with row/column 1 set from ``spec``."""
    k = np.array(getattr(k_hat, "correlation", k_hat), dtype=np.float64, copy=True)
    p = k.shape[0] - 2
    row = np.r_[spec.rho_outcome, 1.0, spec.predictor_targets(p)]
    k[SYNTHETIC_COLUMN, :] = row
    k[:, SYNTHETIC_COLUMN] = row
    return k


def recolor(s_white, target, k_hat=None, alpha0=None):
    """Impose a correlation structure on whitened data.

    Parameters
    ----------
    s_white : StackedMatrix
        Output of :func:`whiten`.
    target : CorrelationSpec or ndarray
        Either a spec (combined with ``k_hat`` through :func:`target_matrix`)
        or the full target correlation matrix.
    k_hat : MomentSummary or ndarray, optional
        Empirical correlation of the stacked data; required with a spec.

    Raises
    ------
    NotPSDError
        If the target matrix cannot be factorized at any shift; the error
        lists the target correlations involved.
    """
    if isinstance(target, CorrelationSpec):
        if k_hat is None:
            raise ValueError("k_hat is required when the target is a CorrelationSpec")
        k = target_matrix(target, k_hat)
        alpha = target.tikhonov_alpha if alpha0 is None else alpha0
    else:
        k = np.asarray(target, dtype=np.float64)
        alpha = 0.0 if alpha0 is None else alpha0
    perm, inv = _synthetic_last(k.shape[0])
    try:
        U, shift = cholesky_psd(k[np.ix_(perm, perm)], alpha)
    except NotPSDError as err:
        entries = {"rho_outcome": float(k[1, 0])}
        entries.update(
            {f"rho_{name}": float(v) for name, v in zip(s_white.names[2:], k[1, 2:]) if v != 0.0}
        )
        raise NotPSDError(
            f"target correlations {entries} are incompatible with the observed correlations "
            f"(leading minor {err.minor} of the target matrix is not positive)",
            minor=err.minor,
            entries=entries,
        ) from None
    wp = s_white.data[:, perm] @ U.T
    if shift > 0:
        wp = wp / np.sqrt(1.0 + shift)
    return StackedMatrix(wp[:, inv], names=s_white.names, shift_used=shift)


def _pearson(a, b):
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt((a @ a) * (b @ b))
    return 0.0 if den == 0 else float(a @ b / den)


def _study_arrays(d):
    s = d.study()
    x = s.predictors
    if np.isnan(x).any():
        raise DataError("predictors have missing cells on study rows; impute first")
    return s.outcome, x, s.predictor_names


def _achieved(r, y, x):
    ach_x = np.array([_pearson(r, x[:, j]) for j in range(x.shape[1])])
    return _pearson(r, y), ach_x


# ---------------------------------------------------------------------------
# end-to-end generators
# ---------------------------------------------------------------------------

def generate_synthetic(d, spec):
    """Synthetic predictor for the study rows of ``d``.

    Pipeline: raw draw, stack, standardize, whiten, recolor to the target
    matrix, undo the standardization, extract column 1. Zero-variance
    predictors are left out of the stack (their correlation with anything is
    reported as 0). A :class:`SynthWarning` is emitted when an achieved
    correlation misses its target by more than :func:`tolerance`.
    """
    y, x, names = _study_arrays(d)
    return _generate(y, x, names, spec)


def _generate(y, x, names, spec):
    n, p = x.shape
    targets = spec.predictor_targets(p)
    r_raw = draw_raw(n, spec.seed)
    stacked = StackedMatrix.stack(y, r_raw, x, names=("Y", "R") + tuple(names))
    z, st = standardize_matrix(stacked.data)
    if st.degenerate[0]:
        raise DataError("outcome has zero variance")
    keep = np.r_[True, True, ~st.degenerate[2:]]
    dropped = np.flatnonzero(st.degenerate[2:])
    if np.any(targets[dropped] != 0):
        warnings.warn("nonzero target correlation with a constant predictor ignored", SynthWarning)
    sub = StackedMatrix(z[:, keep], names=tuple(np.array(stacked.names)[keep]))
    k_hat, _ = correlation_matrix(sub.data)
    white = whiten(sub)
    sub_spec = CorrelationSpec(
        spec.rho_outcome, tuple(targets[~st.degenerate[2:]]), spec.tikhonov_alpha, spec.seed
    )
    colored = recolor(white, sub_spec, k_hat)
    r = colored.synthetic * st.sds[1] + st.means[1]
    ach_y, ach_x = _achieved(r, y, x)
    res = SynthResult(
        r=r,
        achieved_outcome=ach_y,
        achieved_predictors=ach_x,
        target_spec=spec,
        shift_used=colored.shift_used,
        whiten_shift=white.shift_used,
        tol=tolerance(n),
        predictor_names=tuple(names),
        degenerate=st.degenerate[2:].copy(),
    )
    if not res.within_tolerance():
        warnings.warn(
            f"synthetic predictor misses its targets by {res.max_abs_error():.4f} "
            f"(tolerance {res.tol:.4f}); achieved rho(Y,R)={ach_y:.4f}",
            SynthWarning,
        )
    return res


def generate_exact_oracle(d, spec):
    """Independent construction by residualization (zero cross-targets only).

    ``Y`` and a fresh noise vector are projected onto the orthogonal
    complement of ``span{1, X}`` (the noise also off ``Y``), and combined so
    that the correlation with ``Y`` equals ``rho_outcome`` exactly.
    """
    y, x, names = _study_arrays(d)
    n, p = x.shape
    if spec.rho_predictors is not None and any(v != 0 for v in spec.rho_predictors):
        raise ValueError("the residualization oracle supports zero predictor targets only")
    if n <= p + 2:
        raise NumericalRankError(f"residual space is empty: n={n} <= p+2={p + 2}")
    a = np.column_stack([np.ones(n), x])
    q, rr = np.linalg.qr(a)
    rank = int((np.abs(np.diag(rr)) > 1e-10 * np.abs(rr).max()).sum())
    q = q[:, :rank]
    e_y = y - q @ (q.T @ y)
    noise = draw_raw(n, spec.seed)
    q2 = np.column_stack([q, e_y / np.linalg.norm(e_y)])
    e_n = noise - q2 @ (q2.T @ noise)
    yc = y - y.mean()
    ratio = np.linalg.norm(e_y) / np.linalg.norm(yc)
    a_coef = spec.rho_outcome / ratio
    if abs(a_coef) >= 1.0:
        raise NotPSDError(
            f"rho_outcome={spec.rho_outcome} exceeds the attainable bound {ratio:.4f} "
            "for a predictor uncorrelated with X",
            entries={"rho_outcome": spec.rho_outcome},
        )
    b_coef = np.sqrt(1.0 - a_coef ** 2)
    unit = a_coef * e_y / np.linalg.norm(e_y) + b_coef * e_n / np.linalg.norm(e_n)
    r = unit * (noise.std(ddof=1) * np.sqrt(n - 1)) + noise.mean()
    ach_y, ach_x = _achieved(r, y, x)
    return SynthResult(
        r=r,
        achieved_outcome=ach_y,
        achieved_predictors=ach_x,
        target_spec=spec,
        shift_used=0.0,
        tol=tolerance(n),
        predictor_names=tuple(names),
        degenerate=np.zeros(p, dtype=bool),
        method="residualization",
    )


def sweep(d, levels, seed=0, rho_predictors=None):
    """One synthetic predictor per correlation level, seeds derived per level."""
    out = []
    for i, rho in enumerate(levels):
        spec = CorrelationSpec(rho, rho_predictors, seed=derive_seed(seed, i))
        out.append(generate_synthetic(d, spec))
    return out
