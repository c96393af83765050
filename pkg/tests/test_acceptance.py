"""End-to-end acceptance checks, one test per criterion.

Each ``criterion_N`` function returns ``(passed, detail)``; the tests log a
one-line verdict that pytest repeats in its terminal summary. Run directly
(``python3 tests/test_acceptance.py [N ...]``) to print the same lines
without pytest.
"""

import json
import math
import os
import sys
import time
from collections import Counter
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from predsens.cli import main as cli_main
from predsens.data import Dataset, correlation_matrix, impute_simple, load_csv, standardize_matrix
from predsens.diagnostics import (
    OutlierRule,
    detect_outliers,
    fit_the_fit,
    kfold_cv,
    overlap_score,
)
from predsens.regressors import RegressorConfig, fit
from predsens.report import payload_bytes
from predsens.sensitivity import SensitivitySpec, run_sensitivity
from predsens.synth import (
    CorrelationSpec,
    StackedMatrix,
    cholesky_psd,
    draw_raw,
    generate_exact_oracle,
    generate_synthetic,
    recolor,
    whiten,
)

SEEDS = range(20)
LEVELS = (0.1, 0.2, 0.3, 0.4, 0.5)
SD_TAIL = 0.02275  # P(Z < -2)


# ---------------------------------------------------------------------------
# data generators
# ---------------------------------------------------------------------------

def ar1(rng, n, p, rho=0.5):
    c = rho ** np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    return rng.standard_normal((n, p)) @ np.linalg.cholesky(c).T


def dataset(x, y, split=None):
    names = ("y",) + tuple(f"x{j + 1}" for j in range(x.shape[1]))
    return Dataset(names, np.column_stack([y, x]), "y", split=split)


def linear_dgp(seed, n, p=10, r2=0.5, omitted=0.0):
    """AR(1) predictors, linear signal with population R^2 ``r2``.

    With ``omitted > 0`` an unobserved standard normal ``U`` enters the
    outcome, scaled so its partial correlation with ``Y`` given ``X`` is
    ``omitted``; ``r2`` then refers to the share of ``X`` in Var(Y).
    """
    rng = np.random.default_rng(seed)
    x = ar1(rng, n, p)
    beta = np.linspace(1.0, 0.2, p)
    c = 0.5 ** np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    beta /= math.sqrt(beta @ c @ beta)  # Var(X beta) = 1
    rest = (1.0 - r2) / r2
    gamma = omitted * math.sqrt(rest)
    sigma = math.sqrt(rest - gamma ** 2)
    y = x @ beta + gamma * rng.standard_normal(n) + sigma * rng.standard_normal(n)
    return dataset(x, y)


def friedman(seed, n, p=10, noise=1.0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(n, p))
    f = (10 * np.sin(np.pi * x[:, 0] * x[:, 1]) + 20 * (x[:, 2] - 0.5) ** 2
         + 10 * x[:, 3] + 5 * x[:, 4])
    return x, f + noise * rng.standard_normal(n)


def pearson(a, b):
    return float(np.corrcoef(a, b)[0, 1])


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------

def criterion_1():
    """Achieved correlations of the synthetic predictor, by direct Pearson."""
    tol = 0.03
    good_seeds, slowest, oracle_gap = 0, 0.0, 0.0
    for seed in SEEDS:
        d = linear_dgp(1000 + seed, 5000)
        y, x = d.outcome, d.predictors
        ok = True
        for i, rho in enumerate(LEVELS):
            spec = CorrelationSpec(rho, seed=seed * 100 + i)
            t = time.perf_counter()
            r = generate_synthetic(d, spec).r
            slowest = max(slowest, time.perf_counter() - t)
            err_y = abs(pearson(y, r) - rho)
            err_x = max(abs(pearson(x[:, j], r)) for j in range(x.shape[1]))
            ok &= err_y <= tol and err_x <= tol
            ref = generate_exact_oracle(d, spec).r
            gap = max([abs(pearson(y, r) - pearson(y, ref))]
                      + [abs(pearson(x[:, j], r) - pearson(x[:, j], ref)) for j in range(x.shape[1])])
            oracle_gap = max(oracle_gap, gap)
        good_seeds += ok
    passed = good_seeds >= 19 and slowest < 2.0 and oracle_gap <= 0.03
    return passed, (f"{good_seeds}/20 seeds within {tol} at every level; slowest level "
                    f"{slowest:.3f} s; max gap to residualization oracle {oracle_gap:.4f}")


def criterion_2():
    """Whitening gives identity correlation; recoloring with K-hat inverts it."""
    d = linear_dgp(7, 2000)
    s = StackedMatrix.stack(d.outcome, draw_raw(2000, 1), d.predictors)
    z, _ = standardize_matrix(s.data)
    s = StackedMatrix(z)
    w = whiten(s)
    k_w, _ = correlation_matrix(w.data)
    err_white = float(np.abs(k_w - np.eye(k_w.shape[0])).max())
    k_hat, _ = correlation_matrix(s.data)
    err_back = float(np.abs(recolor(w, k_hat).data - s.data).max())
    L, _ = cholesky_psd(np.array([[1.0, 0.5], [0.5, 1.0]]))
    hand = np.array([[1.0, 0.0], [0.5, math.sqrt(0.75)]])
    err_chol = float(np.abs(L - hand).max())
    passed = err_white <= 1e-8 and err_back <= 1e-8 and err_chol <= 1e-12
    return passed, (f"whitened correlation off identity by {err_white:.1e}; recolor error "
                    f"{err_back:.1e}; 2x2 Cholesky error {err_chol:.1e}")


NULL_N = 1000
NULL_RF = RegressorConfig(kind="rf", trees=100)


@lru_cache(maxsize=None)
def null_report(seed, top_k=0):
    d = linear_dgp(2000 + seed, NULL_N)
    spec = SensitivitySpec(correlation_levels=LEVELS, bootstrap_b=100, regressor=NULL_RF,
                           seed=seed, correlate_top_k=top_k)
    t = time.perf_counter()
    rep = run_sensitivity(d, spec)
    return rep, time.perf_counter() - t


def criterion_3():
    """Well-specified data: the synthetic predictor changes nothing material."""
    good, worst_flag, slowest = 0, 0.0, 0.0
    for seed in SEEDS:
        rep, secs = null_report(seed)
        slowest = max(slowest, secs)
        lv = rep.completed
        flags = [v["flagged_fraction"] for v in lv]
        worst_flag = max(worst_flag, max(flags))
        overlap = not any(v["metrics"]["rmse"]["significant"] for v in lv)
        good += len(lv) == len(LEVELS) and max(flags) <= 0.01 and overlap
    passed = good >= 18 and slowest < 300
    return passed, (f"{good}/20 seeds with flagged <= 0.01 and overlapping RMSE intervals at every "
                    f"level; max flagged {worst_flag:.3f}; slowest sweep {slowest:.1f} s (random forest)")


def criterion_4():
    """Omitted variable: the augmented model gains R^2 at rho = 0.5."""
    above, separate, early = 0, 0, 0
    for seed in SEEDS:
        d = linear_dgp(3000 + seed, 5000, omitted=0.5)
        spec = SensitivitySpec(correlation_levels=(0.3, 0.5), bootstrap_b=100,
                               regressor=NULL_RF, seed=seed)
        rep = run_sensitivity(d, spec)
        hi = rep.level(0.5)["metrics"]["r2"]
        above += hi["augmented"]["estimate"] > hi["original"]["estimate"]
        separate += hi["significant"]
        early += rep.level(0.3)["metrics"]["r2"]["significant"]
    passed = above >= 18 and separate >= 14
    return passed, (f"augmented R^2 higher at 0.5 in {above}/20 seeds, intervals separate in "
                    f"{separate}/20 (at 0.3: {early}/20)")


def criterion_5():
    """Correlating R with the two most important predictors changes no verdict."""
    worst, flips, skipped = 0.0, Counter(), Counter()
    for seed in SEEDS:
        base, _ = null_report(seed)
        topk, _ = null_report(seed, top_k=2)
        for a, b in zip(base.levels, topk.levels):
            if a["status"] != "ok" or b["status"] != "ok":
                skipped[a["rho"]] += 1  # an indefinite target: no verdict to compare
                continue
            worst = max(worst, abs(a["flagged_fraction"] - b["flagged_fraction"]))
            for m in a["metrics"]:
                if a["metrics"][m]["significant"] != b["metrics"][m]["significant"]:
                    flips[f"{m}@{a['rho']}"] += 1
    total = sum(flips.values())
    where = ", ".join(f"{k} x{v}" for k, v in sorted(flips.items())) or "none"
    gaps = ", ".join(f"rho {k} in {v} seeds" for k, v in sorted(skipped.items())) or "none"
    passed = worst <= 0.01 and total == 0 and not skipped
    return passed, (f"max flagged change {worst:.3f}; {total} interval verdict flips over 20 seeds "
                    f"({where}); levels skipped as unattainable: {gaps}")


def criterion_6():
    """Normal predictions: the lower 2-sd tail holds 2.275% of units."""
    sd_err = mad_err = 0.0
    for seed in range(5):
        p = np.random.default_rng(seed).normal(500, 80, 100_000)
        sd_err = max(sd_err, abs(detect_outliers(p, OutlierRule("sd", 2.0, "lower")).share - SD_TAIL))
        mad_err = max(mad_err, abs(detect_outliers(p, OutlierRule("mad", 2.0, "lower")).share - SD_TAIL))
    passed = sd_err <= 0.003 and mad_err <= 0.004
    return passed, (f"max deviation from 2.275% over 5 draws: sd rule {100 * sd_err:.3f}pp, "
                    f"mad rule {100 * mad_err:.3f}pp")


def criterion_7():
    """Membership model separates shifted splits and not identical ones."""
    worst_auc, worst_trim, shifted = 0.0, 0.0, 1.0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((3000, 4))
        y = x.sum(axis=1) + rng.standard_normal(3000)
        split = np.array(["study"] * 2000 + ["target"] * 1000)
        same = overlap_score(dataset(x, np.where(split == "study", y, np.nan), split))
        worst_auc = max(worst_auc, same.auc)
        worst_trim = max(worst_trim, same.trimmed_share)
        xs = x.copy()
        xs[split == "target", 0] += 5.0
        moved = overlap_score(dataset(xs, np.where(split == "study", y, np.nan), split))
        shifted = min(shifted, moved.auc)
    passed = worst_auc <= 0.55 and worst_trim <= 0.01 and shifted >= 0.99
    return passed, (f"identical splits: max AUC {worst_auc:.3f}, max trimmed {100 * worst_trim:.2f}%; "
                    f"5-sd shift: min AUC {shifted:.4f}")


STATIONARITY_BART = dict(burn_in=8000, draws=1000, thin=2)


def criterion_8():
    """Friedman data: CV accuracy, sigma^2 chain stationarity, interval coverage."""
    x, y = friedman(0, 2000)
    d = dataset(x, y)
    r2 = {kind: kfold_cv(d, RegressorConfig(kind=kind), k=10, seed=0).aggregate["r2"]
          for kind in ("bart", "rf")}
    zs, covers = [], {}
    x_new, y_new = friedman(99, 2000)
    for seed in (0, 1, 2):
        m = fit(d, RegressorConfig(kind="bart", bart=STATIONARITY_BART, seed=seed))
        zs.append(m.info["geweke_z"])
        lo, hi = m.predict_distribution(x_new, 1000, seed=seed).interval(0.95)
        covers.setdefault("bart", []).append(float(((y_new >= lo) & (y_new <= hi)).mean()))
    forest = fit(d, RegressorConfig(kind="rf", seed=0))
    lo, hi = forest.predict_distribution(x_new, 500, seed=0).interval(0.95)
    rf_cover = float(((y_new >= lo) & (y_new <= hi)).mean())
    stationary = all(abs(z) <= 3.0 for z in zs)
    cover_ok = all(abs(c - 0.95) <= 0.03 for c in covers["bart"])
    passed = min(r2.values()) >= 0.75 and stationary and cover_ok
    return passed, (f"10-fold R^2 bart {r2['bart']:.3f}, rf {r2['rf']:.3f}; sigma^2 Geweke z "
                    f"{', '.join(f'{z:+.2f}' for z in zs)}; 95% coverage bart "
                    f"{', '.join(f'{100 * c:.1f}%' for c in covers['bart'])} "
                    f"(rf, not gated: {100 * rf_cover:.1f}%)")


def criterion_9():
    """A planted one-threshold indicator comes back as a single split."""
    hits = 0
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        x = rng.uniform(size=(800, 4))
        t = rng.uniform(0.3, 0.7)
        ind = (x[:, 2] <= t).astype(float)
        tree = fit_the_fit(x, ind)
        xs = np.sort(x[:, 2])
        k = np.searchsorted(xs, t, side="right")
        gap = xs[k] - xs[k - 1]
        root = tree.root
        hits += (tree.depth == 1 and root.feature == 2 and abs(root.threshold - t) <= gap)
    return hits == 20, f"{hits}/20 seeds recover a depth-1 split on the planted column within one gap"


PISA_ENV = "PREDSENS_PISA_CSV"
PISA_CV_REFERENCE = {"bart": (58.18, 45.75, 0.7306), "rf": (58.84, 46.15, 0.7251)}
PISA_MEANS = (541.4, 516.6)


def criterion_10():
    """Optional check against reference values on user-supplied PISA 2015 microdata."""
    path = os.environ.get(PISA_ENV)
    if not path or not Path(path).is_file():
        return None, f"skipped: set {PISA_ENV} to a prepared CSV (outcome PV1FLIT, missing in Wallonia)"
    cats = [c for c in os.environ.get("PREDSENS_PISA_CATEGORICAL", "").split(",") if c]
    d = impute_simple(load_csv(path, "PV1FLIT", categorical=cats))
    parts, ok = [], True
    for kind, (rmse, mae, r2) in PISA_CV_REFERENCE.items():
        agg = kfold_cv(d, RegressorConfig(kind=kind), k=10, seed=0).aggregate
        ok &= abs(agg["rmse"] - rmse) <= 2.0 and abs(agg["mae"] - mae) <= 2.0 and abs(agg["r2"] - r2) <= 0.02
        parts.append(f"{kind} {agg['rmse']:.2f}/{agg['mae']:.2f}/{agg['r2']:.4f}")
    m = fit(d, RegressorConfig(kind="bart"))
    means = (float(m.point_predict(d.study()).mean()), float(m.point_predict(d.target()).mean()))
    ok &= all(abs(a - b) <= 5.0 for a, b in zip(means, PISA_MEANS))
    parts.append(f"means {means[0]:.1f}/{means[1]:.1f}")
    return ok, "best effort, not gating: " + "; ".join(parts)


DETERMINISM_RUNS = [
    ["predict"],
    ["sensitivity", "--model", "rf", "--trees", "100"],
    ["outliers"],
    ["overlap"],
    ["cv", "--model", "rf"],
    ["crosscv", "--model", "rf", "--proxy", "math"],
]


def criterion_11(tmp_dir):
    """Every command reruns to a byte-identical payload, across thread counts."""
    same = []
    for args in DETERMINISM_RUNS:
        blobs = []
        for rep, threads in enumerate(("1", "2")):
            out = Path(tmp_dir) / f"{args[0]}_{rep}"
            code = cli_main([*args, "--seed", "11", "--threads", threads, "--out-dir", str(out)])
            if code != 0:
                return False, f"{args[0]} exited with {code}"
            blobs.append(payload_bytes(json.loads((out / "report.json").read_text())))
        same.append(blobs[0] == blobs[1])
    return all(same), f"{sum(same)}/{len(same)} commands byte-identical on rerun (1 vs 2 threads)"


# ---------------------------------------------------------------------------
# pytest wrappers
# ---------------------------------------------------------------------------

def _check(log, n, result):
    passed, detail = result
    log(n, "PASS" if passed else "FAIL", detail)
    assert passed, detail


def test_criterion_01_synthetic_fidelity(acceptance_log):
    _check(acceptance_log, 1, criterion_1())


def test_criterion_02_whiten_recolor(acceptance_log):
    _check(acceptance_log, 2, criterion_2())


def test_criterion_03_null_stability(acceptance_log):
    _check(acceptance_log, 3, criterion_3())


def test_criterion_04_detection_power(acceptance_log):
    _check(acceptance_log, 4, criterion_4())


def test_criterion_05_top_k_invariance(acceptance_log):
    _check(acceptance_log, 5, criterion_5())


def test_criterion_06_outlier_tails(acceptance_log):
    _check(acceptance_log, 6, criterion_6())


def test_criterion_07_overlap(acceptance_log):
    _check(acceptance_log, 7, criterion_7())


def test_criterion_08_regressor_quality(acceptance_log):
    _check(acceptance_log, 8, criterion_8())


def test_criterion_09_fit_the_fit(acceptance_log):
    _check(acceptance_log, 9, criterion_9())


def test_criterion_10_reference_values(acceptance_log):
    passed, detail = criterion_10()
    if passed is None:
        acceptance_log(10, "SKIP", detail)
        pytest.skip(detail)
    acceptance_log(10, "PASS" if passed else "FAIL", detail)  # reported, never gating


def test_criterion_11_determinism(acceptance_log, tmp_path):
    _check(acceptance_log, 11, criterion_11(tmp_path))


if __name__ == "__main__":
    import tempfile

    sys.path.insert(0, str(Path(__file__).parent))
    from conftest import format_criterion

    wanted = [int(a) for a in sys.argv[1:]] or list(range(1, 12))
    for n in wanted:
        fn = globals()[f"criterion_{n}"]
        if n == 11:
            with tempfile.TemporaryDirectory() as tmp:
                passed, detail = fn(tmp)
        else:
            passed, detail = fn()
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        print(format_criterion(n, status, detail), flush=True)
