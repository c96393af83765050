"""Time the compiled kernels against the numpy fallback on identical inputs.

Usage: ``python3 benchmarks/bench_kernels.py [--rows N] [--repeat R]``.
Each kernel is run on both backends with the same random state, outputs
are checked for equality, and the best-of-R wall time is reported.
"""

import argparse
import time

import numpy as np

from predsens.kernels import BACKENDS
from predsens.regressors.bart import bin_rows, make_cuts


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def tree_case(k, rows, p):
    rng = np.random.default_rng(0)
    x = np.ascontiguousarray(rng.standard_normal((rows, p)))
    y = x[:, 0] + np.sin(3 * x[:, 1]) + 0.3 * rng.standard_normal(rows)
    sample = rng.integers(0, rows, rows).astype(np.int64)
    cap = 2 * (rows // 5) + 1
    keys = rng.random((cap, p))
    return lambda: k.build_tree(x, y, sample, keys, max(1, p // 3), 5, 64)


def forest_predict_case(k, rows, p, trees=50):
    rng = np.random.default_rng(1)
    x = np.ascontiguousarray(rng.standard_normal((rows, p)))
    y = x[:, 0] + 0.3 * rng.standard_normal(rows)
    ref = BACKENDS.get("cython", BACKENDS["python"])
    parts, offsets = [], [0]
    for _ in range(trees):
        sample = rng.integers(0, rows, rows).astype(np.int64)
        keys = rng.random((2 * (rows // 5) + 1, p))
        t = ref.build_tree(x, y, sample, keys, max(1, p // 3), 5, 64)
        parts.append(t)
        offsets.append(offsets[-1] + t[0].shape[0])
    feature, threshold, left, right, value = (np.concatenate([t[i] for t in parts]) for i in range(5))
    offsets = np.asarray(offsets, dtype=np.int64)
    return lambda: k.predict_trees(x, feature, threshold, left, right, value, offsets)


def bart_state(rows, p, trees, max_depth=8):
    rng = np.random.default_rng(2)
    x = rng.uniform(size=(rows, p))
    y = np.ascontiguousarray(np.sin(np.pi * x[:, 0] * x[:, 1]) + 0.1 * rng.standard_normal(rows))
    xb = bin_rows(x, [make_cuts(x[:, j], 100) for j in range(p)])
    slots = 2 ** (max_depth + 1) - 1
    var = np.full((trees, slots), -2, dtype=np.int32)
    var[:, 0] = -1
    cut = np.zeros((trees, slots), dtype=np.int32)
    val = np.zeros((trees, slots))
    leaf_of = np.zeros((trees, rows), dtype=np.int32)
    return xb, y, np.zeros(rows), leaf_of, var, cut, val, rng


def bart_sweep_case(k, rows, p, trees=50, sweeps=20):
    def go():
        xb, y, fit, leaf_of, var, cut, val, rng = bart_state(rows, p, trees)
        tau2 = (0.5 / (2 * np.sqrt(trees))) ** 2
        for _ in range(sweeps):
            u = rng.random((trees, 5))
            u[:, 4] = 1.0 - u[:, 4]
            normals = rng.standard_normal((trees, int((var == -1).sum(axis=1).max()) + 2))
            k.bart_sweep(xb, y, fit, leaf_of, var, cut, val, u, normals, 0.01, tau2, 0.95, 2.0, 8)
        return fit, var, val
    return go


def bart_predict_case(k, rows, p, trees=50):
    xb, y, fit, leaf_of, var, cut, val, rng = bart_state(rows, p, trees)
    ref = BACKENDS.get("cython", BACKENDS["python"])
    tau2 = (0.5 / (2 * np.sqrt(trees))) ** 2
    for _ in range(30):
        u = rng.random((trees, 5))
        u[:, 4] = 1.0 - u[:, 4]
        normals = rng.standard_normal((trees, int((var == -1).sum(axis=1).max()) + 2))
        ref.bart_sweep(xb, y, fit, leaf_of, var, cut, val, u, normals, 0.01, tau2, 0.95, 2.0, 8)
    return lambda: k.bart_predict(xb, var, cut, val)


CASES = {
    "build_tree": tree_case,
    "predict_trees": forest_predict_case,
    "bart_sweep (20 sweeps)": bart_sweep_case,
    "bart_predict": bart_predict_case,
}


def same(a, b):
    if isinstance(a, tuple):
        return all(same(u, v) for u, v in zip(a, b))
    return np.array_equal(a, b)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=2000)
    ap.add_argument("--predictors", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if "cython" not in BACKENDS:
        print("compiled extension not built; only the fallback is available")
    print(f"rows={args.rows} predictors={args.predictors} best of {args.repeat}")
    print(f"{'kernel':<24}{'python s':>12}{'cython s':>12}{'speed-up':>10}  identical")
    for name, case in CASES.items():
        t_py, out_py = best_time(case(BACKENDS["python"], args.rows, args.predictors), args.repeat)
        if "cython" in BACKENDS:
            t_c, out_c = best_time(case(BACKENDS["cython"], args.rows, args.predictors), args.repeat)
            print(f"{name:<24}{t_py:>12.4f}{t_c:>12.4f}{t_py / t_c:>9.1f}x  {same(out_py, out_c)}")
        else:
            print(f"{name:<24}{t_py:>12.4f}{'-':>12}{'-':>10}  -")


if __name__ == "__main__":
    main()
