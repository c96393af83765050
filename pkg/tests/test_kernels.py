import numpy as np
import pytest

from predsens import kernels
from predsens.kernels import BACKENDS
from predsens.kernels._fallback import ABSENT, LEAF

needs_both = pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")


def prior_expected_leaves(base, power, max_depth):
    # branching process: a node at depth d splits with prob base * (1 + d) ** -power
    leaves = 1.0
    for d in range(max_depth - 1, -1, -1):
        p = base * (1 + d) ** -power
        leaves = (1 - p) + p * 2 * leaves
    return leaves


def fresh_state(m, n, max_depth):
    slots = 2 ** (max_depth + 1) - 1
    var = np.full((m, slots), ABSENT, np.int32)
    var[:, 0] = LEAF
    return (np.zeros(n), np.zeros((m, n), np.int32), var,
            np.zeros((m, slots), np.int32), np.zeros((m, slots)))


def run_chain(k, xb, y, m, iters, sigma2, tau2, max_depth, seed):
    rng = np.random.default_rng(seed)
    fit, leaf_of, var, cut, val = fresh_state(m, y.shape[0], max_depth)
    leaves, accepted = [], 0
    for _ in range(iters):
        u = rng.random((m, 5))
        u[:, 4] = 1 - u[:, 4]
        z = rng.standard_normal((m, int((var == LEAF).sum(axis=1).max()) + 2))
        accepted += k.bart_sweep(xb, y, fit, leaf_of, var, cut, val, u, z,
                                 sigma2, tau2, 0.95, 2.0, max_depth)
        leaves.append((var == LEAF).sum(axis=1).mean())
    return fit, leaf_of, var, cut, val, np.array(leaves), accepted


@pytest.mark.parametrize("backend", sorted(BACKENDS))
def test_bart_sweep_samples_the_tree_prior(backend):
    # a huge error variance makes the likelihood flat, so trees follow the prior
    rng = np.random.default_rng(0)
    n, m, depth = 4000, 300, 6
    xb = np.ascontiguousarray(rng.permutation(n).reshape(n, 1).astype(np.int32))
    y = rng.standard_normal(n)
    *_, leaves, _ = run_chain(BACKENDS[backend], xb, y, m, 250, 1e12, 1.0, depth, 1)
    assert leaves[50:].mean() == pytest.approx(prior_expected_leaves(0.95, 2.0, depth), rel=0.03)


@pytest.mark.parametrize("backend", sorted(BACKENDS))
def test_bart_state_is_consistent(backend):
    rng = np.random.default_rng(1)
    n, m, depth = 300, 10, 5
    xb = np.ascontiguousarray(rng.integers(0, 20, (n, 3)).astype(np.int32))
    y = np.where(xb[:, 0] > 9, 0.3, -0.3) + 0.05 * rng.standard_normal(n)
    fit, leaf_of, var, cut, val, _, accepted = run_chain(BACKENDS[backend], xb, y, m, 60, 0.01, 0.01, depth, 2)
    assert accepted > 0
    for j in range(m):
        # every row sits in a leaf, and routing through the splits agrees
        assert (var[j][leaf_of[j]] == LEAF).all()
        slot_ids = np.arange(var.shape[1], dtype=float)[None, :]
        routed = kernels.bart_predict(xb, var[j:j + 1], cut[j:j + 1], slot_ids)
        np.testing.assert_array_equal(routed, leaf_of[j])
    np.testing.assert_allclose(fit, kernels.bart_predict(xb, var, cut, val), atol=1e-12)
    assert np.mean((y - fit) ** 2) < 0.01


@needs_both
def test_bart_backends_identical():
    rng = np.random.default_rng(3)
    n = 400
    xb = np.ascontiguousarray(rng.integers(0, 30, (n, 4)).astype(np.int32))
    y = np.sin(xb[:, 0] / 5.0) * 0.4 + 0.05 * rng.standard_normal(n)
    a = run_chain(BACKENDS["python"], xb, y, 8, 40, 0.005, 0.002, 6, 9)
    b = run_chain(BACKENDS["cython"], xb, y, 8, 40, 0.005, 0.002, 6, 9)
    for u, v in zip(a[:5], b[:5]):
        np.testing.assert_array_equal(u, v)
    assert a[6] == b[6]
    for k in BACKENDS.values():
        np.testing.assert_array_equal(k.bart_predict(xb, a[2], a[3], a[4]),
                                      BACKENDS["python"].bart_predict(xb, a[2], a[3], a[4]))


def grow(k, x, y, seed, mtry=2, min_leaf=3, max_depth=30, bootstrap=True):
    rng = np.random.default_rng(seed)
    n, p = x.shape
    sample = rng.integers(0, n, n) if bootstrap else np.arange(n)
    keys = rng.random((2 * (n // min_leaf) + 1, p))
    return k.build_tree(x, y, sample, keys, mtry, min_leaf, max_depth)


@pytest.mark.parametrize("backend", sorted(BACKENDS))
def test_tree_invariants(backend):
    k = BACKENDS[backend]
    rng = np.random.default_rng(4)
    x = np.ascontiguousarray(rng.standard_normal((500, 4)))
    y = x[:, 0] ** 2 + 0.1 * rng.standard_normal(500)
    feature, threshold, left, right, value, gain, count = grow(k, x, y, 0)
    leaves = feature < 0
    assert (count[leaves] >= 3).all()
    assert (gain[~leaves] >= -1e-9).all()
    internal = np.flatnonzero(~leaves)
    np.testing.assert_array_equal(count[left[internal]] + count[right[internal]], count[internal])
    assert count[0] == 500
    for node in internal:
        col = x[:, feature[node]]
        assert col.min() <= threshold[node] < col.max()


@pytest.mark.parametrize("backend", sorted(BACKENDS))
def test_tree_memorizes_without_bootstrap(backend):
    k = BACKENDS[backend]
    rng = np.random.default_rng(5)
    x = np.ascontiguousarray(rng.random((200, 3)))
    y = x @ np.array([1.0, -2.0, 0.5])
    tree = grow(k, x, y, 1, mtry=1, min_leaf=1, bootstrap=False)
    pred = k.predict_trees(x, *tree[:5], np.array([0, tree[0].shape[0]], dtype=np.int64))
    np.testing.assert_allclose(pred[:, 0], y, atol=1e-12)


@needs_both
def test_tree_backends_identical():
    rng = np.random.default_rng(6)
    x = np.ascontiguousarray(rng.integers(0, 8, (600, 5)).astype(float))
    y = x[:, 1] * x[:, 2] + rng.standard_normal(600)
    for seed in range(5):
        a = grow(BACKENDS["python"], x, y, seed)
        b = grow(BACKENDS["cython"], x, y, seed)
        for u, v in zip(a, b):
            np.testing.assert_array_equal(u, v)
        off = np.array([0, a[0].shape[0]], dtype=np.int64)
        np.testing.assert_array_equal(
            BACKENDS["python"].predict_trees(x, *a[:5], off),
            BACKENDS["cython"].predict_trees(x, *a[:5], off),
        )


def test_backend_is_reported():
    assert kernels.BACKEND in BACKENDS
