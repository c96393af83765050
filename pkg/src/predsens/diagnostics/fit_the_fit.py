"""Descriptive classification tree for a 0/1 indicator.

Used to describe which predictors drive a black-box model's flagged
units, e.g. the low-prediction indicator from :mod:`.outliers`. Splits
minimize Gini impurity; a split is kept only if it lowers the impurity by
more than ``min_decrease`` and a two-proportion z-test between the
children reaches ``|z| >= z_crit``. This significance gate is an
approximation of conditional-inference trees, which select splits by
permutation tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import Dataset
from ..errors import ConfigError, DataError


@dataclass
class Node:
    count: int
    share: float
    depth: int
    feature: int = -1
    threshold: float = np.nan
    z: float = np.nan
    left: "Node" = None
    right: "Node" = None

    @property
    def is_leaf(self):
        return self.feature < 0


def _gini(ones, n):
    q = ones / n
    return 2.0 * q * (1.0 - q)


def _best_split(x, ind, min_leaf):
    """Best Gini split of one feature: (decrease, threshold, left mask) or None."""
    n = x.shape[0]
    order = np.argsort(x, kind="stable")
    xs, ts = x[order], ind[order]
    pos = np.arange(min_leaf, n - min_leaf + 1)
    if pos.size == 0:
        return None
    pos = pos[xs[pos - 1] < xs[pos]]
    if pos.size == 0:
        return None
    ones = np.cumsum(ts)
    total = ones[-1]
    nl = pos.astype(np.float64)
    nr = n - nl
    ol = ones[pos - 1]
    child = (nl * _gini(ol, nl) + nr * _gini(total - ol, nr)) / n
    k = int(np.argmin(child))
    p = int(pos[k])
    thr = 0.5 * (xs[p - 1] + xs[p])
    if thr >= xs[p]:
        thr = xs[p - 1]
    return _gini(total, n) - child[k], float(thr), float(ol[k]), p


def two_proportion_z(o1, n1, o2, n2):
    """Pooled two-proportion z statistic (0 when both groups are pure alike)."""
    pooled = (o1 + o2) / (n1 + n2)
    var = pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2)
    if var <= 0:
        return 0.0
    return float((o1 / n1 - o2 / n2) / np.sqrt(var))


@dataclass(frozen=True, eq=False)
class FitTheFitTree:
    root: Node
    predictor_names: tuple
    max_depth: int
    min_leaf: int

    def leaves(self):
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend((node.right, node.left))
        return out

    @property
    def depth(self):
        return max(leaf.depth for leaf in self.leaves())

    def apply(self, x):
        """Leaf index (in :meth:`leaves` order) for each row of ``x``."""
        x = np.asarray(x, dtype=np.float64)
        ids = {id(leaf): i for i, leaf in enumerate(self.leaves())}
        out = np.empty(x.shape[0], dtype=np.int64)
        for r in range(x.shape[0]):
            node = self.root
            while not node.is_leaf:
                node = node.left if x[r, node.feature] <= node.threshold else node.right
            out[r] = ids[id(node)]
        return out

    def to_dict(self):
        def conv(node):
            if node.is_leaf:
                return {"leaf": True, "count": node.count, "low_share": node.share}
            return {
                "leaf": False,
                "predictor": self.predictor_names[node.feature],
                "threshold": node.threshold,
                "z": node.z,
                "count": node.count,
                "low_share": node.share,
                "left": conv(node.left),
                "right": conv(node.right),
            }

        return {"max_depth": self.max_depth, "min_leaf": self.min_leaf, "tree": conv(self.root)}

    def to_text(self):
        lines = []

        def walk(node, indent, label):
            pad = "    " * indent
            if node.is_leaf:
                lines.append(f"{pad}{label}leaf: low {100 * node.share:.1f}%, n={node.count}")
                return
            name = self.predictor_names[node.feature]
            lines.append(f"{pad}{label}{name} <= {node.threshold:.6g} (n={node.count})")
            walk(node.left, indent + 1, "yes: ")
            walk(node.right, indent + 1, "no: ")

        walk(self.root, 0, "")
        return "\n".join(lines) + "\n"

    def to_dot(self):
        lines = ["digraph fit_the_fit {", "  node [shape=box];"]
        counter = [0]

        def walk(node):
            i = counter[0]
            counter[0] += 1
            if node.is_leaf:
                lines.append(f'  n{i} [label="low {100 * node.share:.1f}%\\nn = {node.count}"];')
                return i
            name = self.predictor_names[node.feature]
            lines.append(f'  n{i} [label="{name}\\n<= {node.threshold:.6g}", shape=ellipse];')
            a = walk(node.left)
            lines.append(f'  n{i} -> n{a} [label="yes"];')
            b = walk(node.right)
            lines.append(f'  n{i} -> n{b} [label="no"];')
            return i

        walk(self.root)
        lines.append("}")
        return "\n".join(lines) + "\n"


def fit_the_fit(d, indicator, max_depth=3, min_leaf=20, z_crit=1.96, min_decrease=1e-4,
                names=None):
    """Grow a significance-gated Gini tree describing ``indicator``.

    Parameters
    ----------
    d : Dataset or (n, p) array
        Predictors; for a dataset its predictor columns are used.
    indicator : (n,) array of 0/1
    max_depth, min_leaf : int
        Depth limit and minimum rows per leaf.
    """
    if max_depth < 0:
        raise ConfigError("max_depth", "must be nonnegative")
    if min_leaf < 1:
        raise ConfigError("min_leaf", "must be at least 1")
    if isinstance(d, Dataset):
        x, names = d.predictors, d.predictor_names
    else:
        x = np.asarray(d, dtype=np.float64)
        names = tuple(names or (f"x{j + 1}" for j in range(x.shape[1])))
    ind = np.asarray(indicator, dtype=np.float64)
    if x.ndim != 2 or ind.shape != (x.shape[0],):
        raise DataError("indicator must have one value per row")
    if not np.isin(ind, (0.0, 1.0)).all():
        raise DataError("indicator must be 0/1")
    if np.isnan(x).any():
        raise DataError("predictors have missing cells; impute first")

    def grow(rows, depth):
        n = rows.shape[0]
        ones = float(ind[rows].sum())
        node = Node(count=int(n), share=ones / n, depth=depth)
        if depth >= max_depth or ones in (0.0, float(n)):
            return node
        best = None
        for j in range(x.shape[1]):
            res = _best_split(x[rows, j], ind[rows], min_leaf)
            if res is not None and (best is None or res[0] > best[1][0]):
                best = (j, res)
        if best is None:
            return node
        j, (decrease, thr, ol, nl) = best
        if decrease <= min_decrease:
            return node
        z = two_proportion_z(ol, nl, ones - ol, n - nl)
        if abs(z) < z_crit:
            return node
        go_left = x[rows, j] <= thr
        node.feature, node.threshold, node.z = j, thr, z
        node.left = grow(rows[go_left], depth + 1)
        node.right = grow(rows[~go_left], depth + 1)
        return node

    root = grow(np.arange(x.shape[0]), 0)
    return FitTheFitTree(root, tuple(names), int(max_depth), int(min_leaf))
