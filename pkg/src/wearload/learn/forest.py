"""CART trees with Gini splits and a bootstrap random forest."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class Tree:
    # parallel node arrays; leaves have feature == -1
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    p_high: np.ndarray

    def predict_proba(self, X):
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return self.p_high[node]

    def predict(self, X):
        return (self.predict_proba(X) >= 0.5).astype(int)

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in
                ("feature", "threshold", "left", "right", "p_high")}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["feature"], dtype=np.int64), np.array(d["threshold"], dtype=float),
                   np.array(d["left"], dtype=np.int64), np.array(d["right"], dtype=np.int64),
                   np.array(d["p_high"], dtype=float))


def _best_split(Xn, yn, feats):
    """Lowest weighted Gini over candidate features; None if no feature varies."""
    n = len(yn)
    best = None
    for f in feats:
        order = np.argsort(Xn[:, f], kind="stable")
        xs = Xn[order, f]
        ys = yn[order]
        valid = np.flatnonzero(xs[1:] > xs[:-1])  # split after position i
        if valid.size == 0:
            continue
        pos_left = np.cumsum(ys)[valid]
        n_left = valid + 1.0
        n_right = n - n_left
        pos_right = ys.sum() - pos_left
        gini_l = 1.0 - (pos_left / n_left) ** 2 - (1 - pos_left / n_left) ** 2
        gini_r = 1.0 - (pos_right / n_right) ** 2 - (1 - pos_right / n_right) ** 2
        score = (n_left * gini_l + n_right * gini_r) / n
        k = int(np.argmin(score))
        if best is None or score[k] < best[0] - 1e-15:
            i = valid[k]
            best = (score[k], f, 0.5 * (xs[i] + xs[i + 1]))
    return best


def build_tree(X, y, max_features: int, rng: np.random.Generator, min_leaf: int = 1) -> Tree:
    """Grow a CART tree to purity (or until no feature can split a node)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    d = X.shape[1]
    feature, threshold, left, right, p_high = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        p_high.append(float(y[idx].mean()))
        return len(feature) - 1

    root = new_node(np.arange(len(y)))
    stack = [(root, np.arange(len(y)))]
    while stack:
        node, idx = stack.pop()
        yn = y[idx]
        if len(idx) < 2 * min_leaf or yn.min() == yn.max():
            continue
        Xn = X[idx]
        perm = rng.permutation(d)
        split = _best_split(Xn, yn, perm[:max_features])
        if split is None:
            # every sampled feature is constant here; fall back to the rest
            split = _best_split(Xn, yn, perm[max_features:])
        if split is None:
            continue
        _, f, thr = split
        mask = Xn[:, f] <= thr
        feature[node] = int(f)
        threshold[node] = float(thr)
        li, ri = idx[mask], idx[~mask]
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri))
        stack.append((left[node], li))
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold),
                np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                np.array(p_high))


@dataclass(frozen=True, eq=False)
class RandomForest:
    trees: tuple

    kind = "rf"

    def vote_fraction(self, X):
        votes = np.zeros(len(np.atleast_2d(X)))
        for t in self.trees:
            votes += t.predict(X)
        return votes / len(self.trees)

    def predict(self, X):
        return (self.vote_fraction(X) >= 0.5).astype(int)

    def to_dict(self):
        return {"kind": self.kind, "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(Tree.from_dict(t) for t in d["trees"]))


def train_rf(X, y, n_trees: int = 100, seed: int = 0, max_features=None) -> RandomForest:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    n, d = X.shape
    if n == 0:
        raise ValueError("random forest needs a non-empty training set")
    m = max_features or math.ceil(math.sqrt(d))
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        boot = rng.integers(0, n, size=n)
        trees.append(build_tree(X[boot], y[boot], m, rng))
    return RandomForest(tuple(trees))


def predict_rf(model: RandomForest, rows):
    return model.predict(rows)
