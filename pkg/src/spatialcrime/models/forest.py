"""Random forest of Gini CART trees.

Trees are stored as flat arrays. A node with ``feature == -1`` is a leaf;
``value`` holds the positive-class frequency of the training rows that
reached it (the negative frequency is ``1 - value``). Rows go left when
``x[feature] <= threshold``.

Bootstrap duplicates are carried as integer weights rather than repeated
rows, which is equivalent for Gini and for ``min_leaf`` counting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linear import _check_dim, check_training_data


@dataclass(frozen=True)
class RfParams:
    n_trees: int = 100
    max_depth: int | None = 12
    min_leaf: int = 2
    features_per_split: int | None = None
    bootstrap: bool = True
    seed: int = 0
    class_weight: str | None = None

    def resolved_features(self, d: int) -> int:
        if self.features_per_split is None:
            return max(1, math.ceil(math.sqrt(d)))
        return max(1, min(d, int(self.features_per_split)))


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        node = np.zeros(len(X), dtype=np.intp)
        rows = np.arange(len(X))
        active = self.feature[node] >= 0
        while active.any():
            r = rows[active]
            nd = node[r]
            go_left = X[r, self.feature[nd]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])
            active[r] = self.feature[node[r]] >= 0
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]


@dataclass(frozen=True)
class RfModel:
    trees: tuple
    n_features: int
    params: RfParams


def gini_children(n_left, pos_left, n_right, pos_right):
    """Weighted Gini impurity of a split, ``sum n_k * gini_k``; empty sides count 0."""
    n_left = np.asarray(n_left, dtype=float)
    n_right = np.asarray(n_right, dtype=float)
    gl = np.divide(2.0 * pos_left * (n_left - pos_left), n_left, out=np.zeros_like(n_left), where=n_left > 0)
    gr = np.divide(2.0 * pos_right * (n_right - pos_right), n_right, out=np.zeros_like(n_right),
                   where=n_right > 0)
    return gl + gr


def _half_gini(n_l, p_l, n_r, p_r, ok):
    """Half the weighted child impurity where ``ok``, inf elsewhere."""
    n_l = np.where(ok, n_l, 1.0)
    n_r = np.where(ok, n_r, 1.0)
    return np.where(ok, p_l * (n_l - p_l) / n_l + p_r * (n_r - p_r) / n_r, np.inf)


class _Splitter:
    def __init__(self, X, y, min_leaf, n_feat):
        self.X = np.ascontiguousarray(X, dtype=float)
        self.y = y.astype(float)
        self.min_leaf = max(1, min_leaf)
        self.n_feat = n_feat
        self.d = X.shape[1]
        self.binary = np.all((X == 0.0) | (X == 1.0), axis=0)
        self.continuous = np.flatnonzero(~self.binary)

    def best(self, rows, w, rng):
        """Return ``(feature, threshold)`` of the best split or ``None``.

        Features are drawn in a random order until ``n_feat`` non-constant
        ones are found.
        """
        Xn = self.X[rows]
        wy = w * self.y[rows]
        W, P = w.sum(), wy.sum()
        # weighted count and positive mass on the "x = 1" side of every binary column
        n_one = w @ Xn
        p_one = wy @ Xn
        nonconst = self.binary & (n_one > 0) & (n_one < W)
        if self.continuous.size:
            sub = Xn[:, self.continuous]
            nonconst[self.continuous] = sub.max(axis=0) > sub.min(axis=0)
        perm = rng.permutation(self.d)
        feats = np.sort(perm[nonconst[perm]][:self.n_feat])
        if feats.size == 0:
            return None
        is_bin = self.binary[feats]
        # both sides hold at least min_leaf >= 1 weight wherever ok is set
        n_r, p_r = n_one[feats], p_one[feats]
        n_l, p_l = W - n_r, P - p_r
        ok = is_bin & (n_l >= self.min_leaf) & (n_r >= self.min_leaf)
        cand_g = _half_gini(n_l, p_l, n_r, p_r, ok)
        cand_t = np.full(feats.size, 0.5)
        for j in np.flatnonzero(~is_bin):
            col = Xn[:, feats[j]]
            order = np.argsort(col, kind="stable")
            v = col[order]
            n_l = np.cumsum(w[order])[:-1]
            p_l = np.cumsum(wy[order])[:-1]
            ok = (v[1:] > v[:-1]) & (n_l >= self.min_leaf) & (W - n_l >= self.min_leaf)
            if ok.any():
                g = _half_gini(n_l, p_l, W - n_l, P - p_l, ok)
                i = int(np.argmin(g))
                cand_g[j] = g[i]
                cand_t[j] = (v[i] + v[i + 1]) / 2.0
        # feats is ascending and argmin returns the first minimum, so ties go
        # to the lowest feature index; within a feature, to the lowest threshold
        j = int(np.argmin(cand_g))
        if not np.isfinite(cand_g[j]):
            return None
        return int(feats[j]), float(cand_t[j])


def build_tree(X, y, weights, params: RfParams, rng) -> Tree:
    """Grow one tree depth-first on the rows with positive weight."""
    splitter = _Splitter(X, y, params.min_leaf, params.resolved_features(X.shape[1]))
    yf = y.astype(float)
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(rows, w):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float((w * yf[rows]).sum() / w.sum()))
        return len(feature) - 1

    rows0 = np.flatnonzero(weights > 0)
    stack = [(new_node(rows0, weights[rows0]), rows0, weights[rows0], 0)]
    max_depth = params.max_depth
    while stack:
        node, rows, w, depth = stack.pop()
        v = value[node]
        if v in (0.0, 1.0) or (max_depth is not None and depth >= max_depth) or w.sum() < 2 * params.min_leaf:
            continue
        split = splitter.best(rows, w, rng)
        if split is None:
            continue
        f, t = split
        go_left = X[rows, f] <= t
        lrows, lw = rows[go_left], w[go_left]
        rrows, rw = rows[~go_left], w[~go_left]
        li = new_node(lrows, lw)
        ri = new_node(rrows, rw)
        feature[node], threshold[node], left[node], right[node] = f, t, li, ri
        # push right first so the left subtree gets the lower node ids
        stack.append((ri, rrows, rw, depth + 1))
        stack.append((li, lrows, lw, depth + 1))
    return Tree(np.array(feature, dtype=np.intp), np.array(threshold), np.array(left, dtype=np.intp),
                np.array(right, dtype=np.intp), np.array(value))


def _class_scale(y, class_weight):
    if class_weight is None:
        return np.ones(len(y))
    if class_weight == "balanced":
        n, n_pos = len(y), y.sum()
        return np.where(y, n / (2.0 * n_pos), n / (2.0 * (n - n_pos)))
    raise ValueError(f"class_weight must be None or 'balanced', got {class_weight!r}")


def rf_fit(X, y, params: RfParams | None = None) -> RfModel:
    """Bagged CART trees; tree ``i`` draws from ``default_rng([seed, i])``."""
    params = params or RfParams()
    X, y = check_training_data(X, y)
    if params.n_trees < 1:
        raise ValueError("n_trees must be at least 1")
    n = len(y)
    scale = _class_scale(y, params.class_weight)
    trees = []
    for i in range(params.n_trees):
        rng = np.random.default_rng([params.seed, i])
        if params.bootstrap:
            counts = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(float)
        else:
            counts = np.ones(n)
        trees.append(build_tree(X, y, counts * scale, params, rng))
    return RfModel(tuple(trees), X.shape[1], params)


def rf_score(m: RfModel, x) -> np.ndarray | float:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != m.n_features:
        _check_dim(x, np.zeros(m.n_features))
    X = np.atleast_2d(x)
    s = np.mean([t.predict(X) for t in m.trees], axis=0)
    return float(s[0]) if x.ndim == 1 else s
