"""Pure-Python/numpy implementation of the hot kernels.

This module is the reference: the compiled ``_core`` extension performs the
same floating-point operations in the same order, so both backends produce
identical trees and identical MCMC chains for identical random inputs.
Sums that feed a decision are computed sequentially (``np.cumsum`` or
``np.bincount``) rather than with numpy's pairwise ``sum``.
"""

import math

import numpy as np

BACKEND = "python"

LEAF = -1
ABSENT = -2


def _seqsum(a):
    if a.size == 0:
        return 0.0
    return float(np.cumsum(a)[-1])


# ---------------------------------------------------------------------------
# CART regression trees (random forest)
# ---------------------------------------------------------------------------

def _best_split_feature(x, y, min_leaf):
    """Best split of one feature; returns (proxy, position, threshold) or None.

    ``proxy`` is ``sL**2/nL + sR**2/nR``, which is maximal where the summed
    squared error of the children is minimal.
    """
    n = x.shape[0]
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ys = y[order]
    cs = np.cumsum(ys)
    total = cs[-1]
    pos = np.arange(min_leaf, n - min_leaf + 1)
    if pos.size == 0:
        return None
    valid = xs[pos - 1] < xs[pos]
    if not valid.any():
        return None
    pos = pos[valid]
    sl = cs[pos - 1]
    sr = total - sl
    nl = pos.astype(np.float64)
    nr = (n - pos).astype(np.float64)
    proxy = sl * sl / nl + sr * sr / nr
    k = int(np.argmax(proxy))
    p = int(pos[k])
    lo = xs[p - 1]
    hi = xs[p]
    thr = (lo + hi) / 2.0
    if thr >= hi:
        thr = lo
    return float(proxy[k]), p, float(thr)


def build_tree(X, y, sample, feature_keys, mtry, min_leaf, max_depth):
    """Grow one regression tree on the rows ``sample`` of ``X``.

    Nodes are numbered in creation order; a split node creates its left then
    right child and the left subtree is processed first. ``feature_keys[k]``
    ranks the candidate features at node ``k``.

    Returns arrays (feature, threshold, left, right, value, gain, count);
    ``feature == -1`` marks a leaf.
    """
    n_features = X.shape[1]
    cap = feature_keys.shape[0]
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    gain = np.zeros(cap)
    count = np.zeros(cap, dtype=np.int64)

    sample = np.asarray(sample, dtype=np.int64)
    stack = [(0, sample, 0)]
    n_nodes = 1
    while stack:
        node, idx, depth = stack.pop()
        n = idx.shape[0]
        yn = y[idx]
        s = _seqsum(yn)
        value[node] = s / n
        count[node] = n
        if n < 2 * min_leaf or depth >= max_depth or yn.max() == yn.min():
            continue
        order = np.argsort(feature_keys[node], kind="stable")
        best = None
        best_f = -1
        evaluated = 0
        for f in order:
            if evaluated >= mtry and best is not None:
                break
            evaluated += 1
            res = _best_split_feature(X[idx, f], yn, min_leaf)
            if res is not None and (best is None or res[0] > best[0]):
                best = res
                best_f = int(f)
        if best is None:
            continue
        proxy, _, thr = best
        xcol = X[idx, best_f]
        go_left = xcol <= thr
        feature[node] = best_f
        threshold[node] = thr
        gain[node] = proxy - s * s / n
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        stack.append((rc, idx[~go_left], depth + 1))
        stack.append((lc, idx[go_left], depth + 1))
    del n_features
    k = n_nodes
    return (feature[:k].copy(), threshold[:k].copy(), left[:k].copy(),
            right[:k].copy(), value[:k].copy(), gain[:k].copy(), count[:k].copy())


def predict_trees(X, feature, threshold, left, right, value, offsets):
    """Per-tree predictions, shape ``(n_rows, n_trees)``.

    Node arrays of all trees are concatenated; tree ``t`` occupies
    ``offsets[t]:offsets[t + 1]`` and its child indices are tree-local.
    """
    n = X.shape[0]
    n_trees = offsets.shape[0] - 1
    out = np.empty((n, n_trees))
    rows = np.arange(n)
    for t in range(n_trees):
        base = offsets[t]
        node = np.zeros(n, dtype=np.int64)
        while True:
            f = feature[base + node]
            active = f >= 0
            if not active.any():
                break
            fa = f[active]
            na = node[active]
            go_left = X[rows[active], fa] <= threshold[base + na]
            node[active] = np.where(go_left, left[base + na], right[base + na])
        out[:, t] = value[base + node]
    return out


# ---------------------------------------------------------------------------
# BART grow/prune backfitting sweep
# ---------------------------------------------------------------------------

def _split_prob(base, power, depth, max_depth):
    if depth >= max_depth:
        return 0.0
    return base * (1.0 + depth) ** (-power)


def _log_lik_ratio(n_l, s_l, n_r, s_r, sigma2, tau2):
    """Log marginal-likelihood ratio of splitting a leaf into two."""
    n = n_l + n_r
    s = s_l + s_r
    a_l = sigma2 + n_l * tau2
    a_r = sigma2 + n_r * tau2
    a = sigma2 + n * tau2
    out = 0.5 * (math.log(sigma2) + math.log(a) - math.log(a_l) - math.log(a_r))
    out += tau2 / (2.0 * sigma2) * (s_l * s_l / a_l + s_r * s_r / a_r - s * s / a)
    return out


def _log_prior_ratio(base, power, depth, max_depth):
    p = _split_prob(base, power, depth, max_depth)
    pc = _split_prob(base, power, depth + 1, max_depth)
    return math.log(p) + 2.0 * math.log(1.0 - pc) - math.log(1.0 - p)


def bart_sweep(Xb, y, fit, leaf_of, var, cut, val, uniforms, normals,
               sigma2, tau2, base, power, max_depth):
    """One backfitting pass over all trees, modifying the state in place.

    Parameters
    ----------
    Xb : (n, p) int32
        Predictors as cut-grid bin indices; ``x <= cut_c`` iff ``Xb <= c``.
    y : (n,) float64
        Transformed outcome.
    fit : (n,) float64
        Current sum-of-trees fit; updated.
    leaf_of : (m, n) int32
        Heap slot of the leaf holding each row in each tree; updated.
    var, cut : (m, slots) int32
        Split variable and cut index per heap slot; ``var == -1`` is a leaf,
        ``var == -2`` an absent slot.
    val : (m, slots) float64
        Leaf means.
    uniforms : (m, 5) float64
        Move, node, variable, cut and acceptance uniforms per tree.
    normals : (m, k) float64
        Standard normals for the leaf draws, indexed by leaf ordinal in slot
        order; ``k`` must exceed every tree's leaf count.
    sigma2, tau2 : float
        Error variance and leaf-prior variance.

    Returns
    -------
    int
        Number of accepted grow/prune proposals.
    """
    n, p = Xb.shape
    m, slots = var.shape
    accepted = 0
    for j in range(m):
        vj = var[j]
        lj = leaf_of[j]
        others = fit - val[j][lj]
        r = y - others

        is_leaf = vj == LEAF
        leaves = np.flatnonzero(is_leaf)
        b = leaves.shape[0]
        internal = np.flatnonzero(vj >= 0)
        nogs = internal[is_leaf[2 * internal + 1] & is_leaf[2 * internal + 2]]
        w = nogs.shape[0]
        u = uniforms[j]

        if b == 1 or u[0] < 0.5:
            node = int(leaves[int(u[1] * b)])
            depth = int(math.floor(math.log2(node + 1)))
            if depth < max_depth:
                rows = np.flatnonzero(lj == node)
                xb = Xb[rows]
                lo = xb.min(axis=0)
                hi = xb.max(axis=0)
                adm = np.flatnonzero(hi > lo)
                p_adj = adm.shape[0]
                if p_adj > 0:
                    v = int(adm[int(u[2] * p_adj)])
                    n_adj = int(hi[v] - lo[v])
                    c = int(lo[v]) + int(u[3] * n_adj)
                    go_left = xb[:, v] <= c
                    rl = r[rows[go_left]]
                    rr = r[rows[~go_left]]
                    n_l = rl.shape[0]
                    n_r = rr.shape[0]
                    s_l = _seqsum(rl)
                    s_r = _seqsum(rr)
                    sibling_leaf = 0
                    if node > 0:
                        sib = node + 1 if node % 2 == 1 else node - 1
                        sibling_leaf = 1 if vj[sib] == LEAF else 0
                    w_new = w + 1 - sibling_leaf
                    log_a = _log_lik_ratio(n_l, s_l, n_r, s_r, sigma2, tau2)
                    log_a += _log_prior_ratio(base, power, depth, max_depth)
                    p_grow = 1.0 if b == 1 else 0.5
                    log_a += math.log(0.5 / p_grow) + math.log(b) - math.log(w_new)
                    if math.log(u[4]) < log_a:
                        accepted += 1
                        vj[node] = v
                        cut[j, node] = c
                        vj[2 * node + 1] = LEAF
                        vj[2 * node + 2] = LEAF
                        lj[rows[go_left]] = 2 * node + 1
                        lj[rows[~go_left]] = 2 * node + 2
        else:
            node = int(nogs[int(u[1] * w)])
            depth = int(math.floor(math.log2(node + 1)))
            lc = 2 * node + 1
            rc = 2 * node + 2
            rl = r[lj == lc]
            rr = r[lj == rc]
            n_l = rl.shape[0]
            n_r = rr.shape[0]
            s_l = _seqsum(rl)
            s_r = _seqsum(rr)
            log_a = -_log_lik_ratio(n_l, s_l, n_r, s_r, sigma2, tau2)
            log_a -= _log_prior_ratio(base, power, depth, max_depth)
            p_grow_new = 1.0 if b - 1 == 1 else 0.5
            log_a += math.log(p_grow_new / 0.5) + math.log(w) - math.log(b - 1)
            if math.log(u[4]) < log_a:
                accepted += 1
                vj[node] = LEAF
                vj[lc] = ABSENT
                vj[rc] = ABSENT
                lj[(lj == lc) | (lj == rc)] = node

        cnt = np.bincount(lj, minlength=slots)
        sm = np.bincount(lj, weights=r, minlength=slots)
        leaves = np.flatnonzero(vj == LEAF)
        for k, leaf in enumerate(leaves):
            post_var = 1.0 / (1.0 / tau2 + cnt[leaf] / sigma2)
            post_mean = post_var * sm[leaf] / sigma2
            val[j, leaf] = post_mean + math.sqrt(post_var) * normals[j, k]
        fit[:] = others + val[j][lj]
    return accepted


def bart_predict(Xb, var, cut, val):
    """Sum-of-trees prediction for binned rows."""
    n = Xb.shape[0]
    m = var.shape[0]
    out = np.zeros(n)
    rows = np.arange(n)
    for j in range(m):
        node = np.zeros(n, dtype=np.int64)
        while True:
            v = var[j, node]
            active = v >= 0
            if not active.any():
                break
            na = node[active]
            go_left = Xb[rows[active], v[active]] <= cut[j, na]
            node[active] = np.where(go_left, 2 * na + 1, 2 * na + 2)
        out += val[j, node]
    return out
