# distutils: language = c++
"""Compiled kernels: CART growth/prediction and the BART backfitting sweep.

Every routine mirrors ``_fallback.py`` operation for operation (same
traversal order, same sequential sums, same libm calls) so the two
backends are interchangeable bit for bit.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, pow, sqrt, floor
from libcpp.vector cimport vector
from libcpp.pair cimport pair
from libcpp.algorithm cimport sort

cnp.import_array()

BACKEND = "cython"

cdef int LEAF = -1
cdef int ABSENT = -2


# ---------------------------------------------------------------------------
# CART regression trees
# ---------------------------------------------------------------------------

cdef struct SplitResult:
    int found
    double proxy
    double threshold


cdef SplitResult _best_split_feature(const double[:, ::1] X, const double[::1] y,
                                     const long long[::1] samples, Py_ssize_t start,
                                     Py_ssize_t end, Py_ssize_t f, Py_ssize_t min_leaf,
                                     vector[pair[double, Py_ssize_t]]& buf,
                                     double* ys) noexcept nogil:
    cdef SplitResult res
    cdef Py_ssize_t n = end - start
    cdef Py_ssize_t k, pos
    cdef double cs, total, sl, sr, proxy, lo, hi, thr
    cdef int have = 0
    cdef double best = 0.0
    cdef Py_ssize_t best_pos = -1
    res.found = 0
    res.proxy = 0.0
    res.threshold = 0.0
    if n - min_leaf < min_leaf:
        return res
    buf.clear()
    for k in range(n):
        buf.push_back(pair[double, Py_ssize_t](X[samples[start + k], f], k))
    sort(buf.begin(), buf.end())
    for k in range(n):
        ys[k] = y[samples[start + buf[k].second]]
    # sequential prefix sums, as np.cumsum
    cs = 0.0
    for k in range(n):
        cs = cs + ys[k]
        ys[k] = cs
    total = ys[n - 1]
    for pos in range(min_leaf, n - min_leaf + 1):
        if not (buf[pos - 1].first < buf[pos].first):
            continue
        sl = ys[pos - 1]
        sr = total - sl
        proxy = sl * sl / <double>pos + sr * sr / <double>(n - pos)
        if not have or proxy > best:
            have = 1
            best = proxy
            best_pos = pos
    if not have:
        return res
    lo = buf[best_pos - 1].first
    hi = buf[best_pos].first
    thr = (lo + hi) / 2.0
    if thr >= hi:
        thr = lo
    res.found = 1
    res.proxy = best
    res.threshold = thr
    return res


def build_tree(const double[:, ::1] X, const double[::1] y, sample,
               const double[:, ::1] feature_keys, Py_ssize_t mtry,
               Py_ssize_t min_leaf, Py_ssize_t max_depth):
    """Grow one regression tree; see ``_fallback.build_tree``."""
    cdef Py_ssize_t n_features = X.shape[1]
    cdef Py_ssize_t cap = feature_keys.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] feature_a = np.full(cap, -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] threshold_a = np.zeros(cap)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] left_a = np.full(cap, -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] right_a = np.full(cap, -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] value_a = np.zeros(cap)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] gain_a = np.zeros(cap)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] count_a = np.zeros(cap, dtype=np.int64)
    cdef long long[::1] feature = feature_a
    cdef double[::1] threshold = threshold_a
    cdef long long[::1] left = left_a
    cdef long long[::1] right = right_a
    cdef double[::1] value = value_a
    cdef double[::1] gain = gain_a
    cdef long long[::1] count = count_a

    cdef cnp.ndarray[cnp.int64_t, ndim=1] samples_a = np.array(sample, dtype=np.int64, copy=True)
    cdef long long[::1] samples = samples_a
    cdef Py_ssize_t m = samples.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] tmp_a = np.empty(max(m, 1), dtype=np.int64)
    cdef long long[::1] tmp = tmp_a
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ys_a = np.empty(max(m, 1))
    cdef double* ys = <double*> ys_a.data

    cdef vector[pair[double, Py_ssize_t]] buf
    cdef vector[pair[double, Py_ssize_t]] order
    cdef vector[Py_ssize_t] st_node, st_start, st_end, st_depth
    cdef Py_ssize_t n_nodes = 1
    cdef Py_ssize_t node, start, end, depth, n, k, fi, f, best_f, evaluated, nl, lc, rc
    cdef double s, ymin, ymax, yv, thr, best_proxy
    cdef int have_best
    cdef SplitResult res

    with nogil:
        st_node.push_back(0)
        st_start.push_back(0)
        st_end.push_back(m)
        st_depth.push_back(0)
        while st_node.size() > 0:
            node = st_node.back()
            start = st_start.back()
            end = st_end.back()
            depth = st_depth.back()
            st_node.pop_back()
            st_start.pop_back()
            st_end.pop_back()
            st_depth.pop_back()
            n = end - start
            s = 0.0
            ymin = y[samples[start]]
            ymax = ymin
            for k in range(start, end):
                yv = y[samples[k]]
                s = s + yv
                if yv < ymin:
                    ymin = yv
                if yv > ymax:
                    ymax = yv
            value[node] = s / <double>n
            count[node] = n
            if n < 2 * min_leaf or depth >= max_depth or ymax == ymin:
                continue
            order.clear()
            for f in range(n_features):
                order.push_back(pair[double, Py_ssize_t](feature_keys[node, f], f))
            sort(order.begin(), order.end())
            have_best = 0
            best_f = -1
            best_proxy = 0.0
            thr = 0.0
            evaluated = 0
            for fi in range(n_features):
                if evaluated >= mtry and have_best:
                    break
                evaluated += 1
                f = order[fi].second
                res = _best_split_feature(X, y, samples, start, end, f, min_leaf, buf, ys)
                if res.found and (not have_best or res.proxy > best_proxy):
                    have_best = 1
                    best_proxy = res.proxy
                    best_f = f
                    thr = res.threshold
            if not have_best:
                continue
            feature[node] = best_f
            threshold[node] = thr
            gain[node] = best_proxy - s * s / <double>n
            # stable partition of samples[start:end]
            nl = 0
            for k in range(start, end):
                if X[samples[k], best_f] <= thr:
                    tmp[start + nl] = samples[k]
                    nl += 1
            fi = start + nl
            for k in range(start, end):
                if not (X[samples[k], best_f] <= thr):
                    tmp[fi] = samples[k]
                    fi += 1
            for k in range(start, end):
                samples[k] = tmp[k]
            lc = n_nodes
            rc = n_nodes + 1
            n_nodes += 2
            left[node] = lc
            right[node] = rc
            st_node.push_back(rc)
            st_start.push_back(start + nl)
            st_end.push_back(end)
            st_depth.push_back(depth + 1)
            st_node.push_back(lc)
            st_start.push_back(start)
            st_end.push_back(start + nl)
            st_depth.push_back(depth + 1)

    k = n_nodes
    return (feature_a[:k].copy(), threshold_a[:k].copy(), left_a[:k].copy(),
            right_a[:k].copy(), value_a[:k].copy(), gain_a[:k].copy(), count_a[:k].copy())


def predict_trees(const double[:, ::1] X, const long long[::1] feature,
                  const double[::1] threshold, const long long[::1] left,
                  const long long[::1] right, const double[::1] value,
                  const long long[::1] offsets):
    """Per-tree predictions, shape ``(n_rows, n_trees)``."""
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t n_trees = offsets.shape[0] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out_a = np.empty((n, n_trees))
    cdef double[:, ::1] out = out_a
    cdef Py_ssize_t i, t, base, node
    cdef long long f
    with nogil:
        for i in range(n):
            for t in range(n_trees):
                base = offsets[t]
                node = 0
                f = feature[base]
                while f >= 0:
                    if X[i, f] <= threshold[base + node]:
                        node = left[base + node]
                    else:
                        node = right[base + node]
                    f = feature[base + node]
                out[i, t] = value[base + node]
    return out_a


# ---------------------------------------------------------------------------
# BART
# ---------------------------------------------------------------------------

cdef inline double _split_prob(double base, double power, Py_ssize_t depth,
                               Py_ssize_t max_depth) noexcept nogil:
    if depth >= max_depth:
        return 0.0
    return base * pow(1.0 + depth, -power)


cdef inline double _log_lik_ratio(Py_ssize_t n_l, double s_l, Py_ssize_t n_r, double s_r,
                                  double sigma2, double tau2) noexcept nogil:
    cdef Py_ssize_t n = n_l + n_r
    cdef double s = s_l + s_r
    cdef double a_l = sigma2 + n_l * tau2
    cdef double a_r = sigma2 + n_r * tau2
    cdef double a = sigma2 + n * tau2
    cdef double out = 0.5 * (log(sigma2) + log(a) - log(a_l) - log(a_r))
    out += tau2 / (2.0 * sigma2) * (s_l * s_l / a_l + s_r * s_r / a_r - s * s / a)
    return out


cdef inline double _log_prior_ratio(double base, double power, Py_ssize_t depth,
                                    Py_ssize_t max_depth) noexcept nogil:
    cdef double p = _split_prob(base, power, depth, max_depth)
    cdef double pc = _split_prob(base, power, depth + 1, max_depth)
    return log(p) + 2.0 * log(1.0 - pc) - log(1.0 - p)


cdef inline Py_ssize_t _depth(Py_ssize_t node) noexcept nogil:
    cdef Py_ssize_t d = 0
    node += 1
    while node > 1:
        node >>= 1
        d += 1
    return d


def bart_sweep(const int[:, ::1] Xb, const double[::1] y, double[::1] fit,
               int[:, ::1] leaf_of, int[:, ::1] var, int[:, ::1] cut,
               double[:, ::1] val, const double[:, ::1] uniforms,
               const double[:, ::1] normals, double sigma2, double tau2,
               double base, double power, Py_ssize_t max_depth):
    """One backfitting pass over all trees; see ``_fallback.bart_sweep``."""
    cdef Py_ssize_t n = Xb.shape[0]
    cdef Py_ssize_t p = Xb.shape[1]
    cdef Py_ssize_t m = var.shape[0]
    cdef Py_ssize_t slots = var.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] others_a = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] r_a = np.empty(n)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] rows_a = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] lo_a = np.empty(p, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] hi_a = np.empty(p, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] cnt_a = np.empty(slots, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sm_a = np.empty(slots)
    cdef double[::1] others = others_a
    cdef double[::1] r = r_a
    cdef long long[::1] rows = rows_a
    cdef long long[::1] lo = lo_a
    cdef long long[::1] hi = hi_a
    cdef long long[::1] cnt = cnt_a
    cdef double[::1] sm = sm_a

    cdef Py_ssize_t j, i, k, b, w, node, depth, n_rows, p_adj, v, c, n_adj
    cdef Py_ssize_t n_l, n_r, lc, rc, sib, sibling_leaf, w_new, leaf_k
    cdef long long xv
    cdef double s_l, s_r, log_a, p_grow, p_grow_new, post_var, post_mean
    cdef int accepted = 0

    with nogil:
        for j in range(m):
            for i in range(n):
                others[i] = fit[i] - val[j, leaf_of[j, i]]
                r[i] = y[i] - others[i]
            b = 0
            w = 0
            for k in range(slots):
                if var[j, k] == LEAF:
                    b += 1
                elif var[j, k] >= 0:
                    if var[j, 2 * k + 1] == LEAF and var[j, 2 * k + 2] == LEAF:
                        w += 1

            if b == 1 or uniforms[j, 0] < 0.5:
                # grow
                k = <Py_ssize_t>(uniforms[j, 1] * b)
                node = -1
                for i in range(slots):
                    if var[j, i] == LEAF:
                        if k == 0:
                            node = i
                            break
                        k -= 1
                depth = _depth(node)
                if depth < max_depth:
                    n_rows = 0
                    for i in range(n):
                        if leaf_of[j, i] == node:
                            rows[n_rows] = i
                            n_rows += 1
                    for v in range(p):
                        lo[v] = Xb[rows[0], v]
                        hi[v] = lo[v]
                    for k in range(1, n_rows):
                        for v in range(p):
                            xv = Xb[rows[k], v]
                            if xv < lo[v]:
                                lo[v] = xv
                            if xv > hi[v]:
                                hi[v] = xv
                    p_adj = 0
                    for v in range(p):
                        if hi[v] > lo[v]:
                            p_adj += 1
                    if p_adj > 0:
                        k = <Py_ssize_t>(uniforms[j, 2] * p_adj)
                        v = -1
                        for i in range(p):
                            if hi[i] > lo[i]:
                                if k == 0:
                                    v = i
                                    break
                                k -= 1
                        n_adj = hi[v] - lo[v]
                        c = lo[v] + <Py_ssize_t>(uniforms[j, 3] * n_adj)
                        n_l = 0
                        n_r = 0
                        s_l = 0.0
                        s_r = 0.0
                        for k in range(n_rows):
                            i = rows[k]
                            if Xb[i, v] <= c:
                                n_l += 1
                                s_l = s_l + r[i]
                            else:
                                n_r += 1
                                s_r = s_r + r[i]
                        sibling_leaf = 0
                        if node > 0:
                            if node % 2 == 1:
                                sib = node + 1
                            else:
                                sib = node - 1
                            if var[j, sib] == LEAF:
                                sibling_leaf = 1
                        w_new = w + 1 - sibling_leaf
                        log_a = _log_lik_ratio(n_l, s_l, n_r, s_r, sigma2, tau2)
                        log_a += _log_prior_ratio(base, power, depth, max_depth)
                        if b == 1:
                            p_grow = 1.0
                        else:
                            p_grow = 0.5
                        log_a += log(0.5 / p_grow) + log(<double>b) - log(<double>w_new)
                        if log(uniforms[j, 4]) < log_a:
                            accepted += 1
                            var[j, node] = v
                            cut[j, node] = c
                            var[j, 2 * node + 1] = LEAF
                            var[j, 2 * node + 2] = LEAF
                            for k in range(n_rows):
                                i = rows[k]
                                if Xb[i, v] <= c:
                                    leaf_of[j, i] = 2 * node + 1
                                else:
                                    leaf_of[j, i] = 2 * node + 2
            else:
                # prune
                k = <Py_ssize_t>(uniforms[j, 1] * w)
                node = -1
                for i in range(slots):
                    if var[j, i] >= 0 and var[j, 2 * i + 1] == LEAF and var[j, 2 * i + 2] == LEAF:
                        if k == 0:
                            node = i
                            break
                        k -= 1
                depth = _depth(node)
                lc = 2 * node + 1
                rc = 2 * node + 2
                n_l = 0
                n_r = 0
                s_l = 0.0
                s_r = 0.0
                for i in range(n):
                    if leaf_of[j, i] == lc:
                        n_l += 1
                        s_l = s_l + r[i]
                    elif leaf_of[j, i] == rc:
                        n_r += 1
                        s_r = s_r + r[i]
                log_a = -_log_lik_ratio(n_l, s_l, n_r, s_r, sigma2, tau2)
                log_a -= _log_prior_ratio(base, power, depth, max_depth)
                if b - 1 == 1:
                    p_grow_new = 1.0
                else:
                    p_grow_new = 0.5
                log_a += log(p_grow_new / 0.5) + log(<double>w) - log(<double>(b - 1))
                if log(uniforms[j, 4]) < log_a:
                    accepted += 1
                    var[j, node] = LEAF
                    var[j, lc] = ABSENT
                    var[j, rc] = ABSENT
                    for i in range(n):
                        if leaf_of[j, i] == lc or leaf_of[j, i] == rc:
                            leaf_of[j, i] = node

            for k in range(slots):
                cnt[k] = 0
                sm[k] = 0.0
            for i in range(n):
                cnt[leaf_of[j, i]] += 1
                sm[leaf_of[j, i]] += r[i]
            leaf_k = 0
            for k in range(slots):
                if var[j, k] == LEAF:
                    post_var = 1.0 / (1.0 / tau2 + cnt[k] / sigma2)
                    post_mean = post_var * sm[k] / sigma2
                    val[j, k] = post_mean + sqrt(post_var) * normals[j, leaf_k]
                    leaf_k += 1
            for i in range(n):
                fit[i] = others[i] + val[j, leaf_of[j, i]]
    return accepted


def bart_predict(const int[:, ::1] Xb, const int[:, ::1] var, const int[:, ::1] cut,
                 const double[:, ::1] val):
    """Sum-of-trees prediction for binned rows."""
    cdef Py_ssize_t n = Xb.shape[0]
    cdef Py_ssize_t m = var.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_a = np.zeros(n)
    cdef double[::1] out = out_a
    cdef Py_ssize_t i, j, node
    cdef int v
    with nogil:
        for i in range(n):
            for j in range(m):
                node = 0
                v = var[j, 0]
                while v >= 0:
                    if Xb[i, v] <= cut[j, node]:
                        node = 2 * node + 1
                    else:
                        node = 2 * node + 2
                    v = var[j, node]
                out[i] = out[i] + val[j, node]
    return out_a
