"""Standardisation, correlation-based feature selection and PCA."""
from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

# |r| at or above this marks two columns as copies of each other
DUPLICATE_CORR = 1.0 - 1e-9


class DegenerateLabels(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Standardizer:
    means: np.ndarray
    stds: np.ndarray

    def apply(self, X):
        return (np.asarray(X, dtype=float) - self.means) / self.stds

    def to_dict(self):
        return {"means": self.means.tolist(), "stds": self.stds.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["means"], dtype=float), np.array(d["stds"], dtype=float))


def fit_standardizer(X, names: Sequence[str] = ()) -> Standardizer:
    X = np.asarray(X, dtype=float)
    means = X.mean(axis=0)
    stds = X.std(axis=0, ddof=1) if len(X) > 1 else np.zeros(X.shape[1])
    flat = ~(stds > 1e-12 * np.maximum(1.0, np.abs(means)))
    if flat.any():
        cols = [names[i] if i < len(names) else str(i) for i in np.flatnonzero(flat)]
        log.warning("zero-variance feature(s) %s: std set to 1", cols)
        stds = np.where(flat, 1.0, stds)
    return Standardizer(means, stds)


def apply_standardizer(std: Standardizer, X):
    return std.apply(X)


def _abs_corr_matrix(X, y):
    """|Pearson r| among the columns of X and the label, with NaN -> 0."""
    Z = np.column_stack([X, y]).astype(float)
    Z = Z - Z.mean(axis=0)
    norms = np.sqrt(np.sum(Z * Z, axis=0))
    ok = norms > 0
    Z[:, ok] /= norms[ok]
    Z[:, ~ok] = 0.0
    C = np.abs(Z.T @ Z)
    np.fill_diagonal(C, 1.0)
    return np.clip(C[:-1, :-1], 0.0, 1.0), C[:-1, -1]


def cfs_merit(subset, r_cf, r_ff) -> float:
    k = len(subset)
    if k == 0:
        return 0.0
    idx = list(subset)
    rcf = float(np.mean(r_cf[idx]))
    if k == 1:
        rff = 0.0
    else:
        sub = r_ff[np.ix_(idx, idx)]
        rff = float((sub.sum() - k) / (k * (k - 1)))
    return k * rcf / math.sqrt(k + k * (k - 1) * rff)


def cfs_select(X, y, names: Sequence[str], stale_limit: int = 5) -> list[str]:
    """Forward best-first search for the subset with the highest CFS merit.

    Merit is ``k * mean|r_cf| / sqrt(k + k(k-1) * mean|r_ff|)`` with
    point-biserial feature-label correlations. A candidate that exactly
    duplicates a member of the subset is never added. Ties between equal
    merits resolve toward the lexicographically smallest index tuple.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) != 2 or counts.min() < 2:
        raise DegenerateLabels("CFS needs two classes with at least 2 samples each")
    r_ff, r_cf = _abs_corr_matrix(X, (y == classes[1]).astype(float))
    d = X.shape[1]

    best, best_merit = (), 0.0
    open_heap = [(-0.0, ())]
    seen = {()}
    stale = 0
    while open_heap and stale < stale_limit:
        _, node = heapq.heappop(open_heap)
        improved = False
        for j in range(d):
            if j in node or any(r_ff[j, m] >= DUPLICATE_CORR for m in node):
                continue
            child = tuple(sorted(node + (j,)))
            if child in seen:
                continue
            seen.add(child)
            merit = cfs_merit(child, r_cf, r_ff)
            heapq.heappush(open_heap, (-merit, child))
            if merit > best_merit + 1e-12 or (not best and merit > 0):
                best, best_merit = child, merit
                improved = True
        stale = 0 if improved else stale + 1
    if not best:
        best = (int(np.argmax(r_cf)),)
    return [names[i] for i in best]


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # rows = loadings, all of them
    eigenvalues: np.ndarray
    retained_count: int

    @property
    def retained(self):
        return self.components[: self.retained_count]

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean) @ self.retained.T

    def inverse_transform(self, Z):
        return np.asarray(Z) @ self.retained + self.mean

    def to_dict(self):
        return {"mean": self.mean.tolist(), "components": self.components.tolist(),
                "eigenvalues": self.eigenvalues.tolist(), "retained_count": self.retained_count}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["mean"], dtype=float), np.array(d["components"], dtype=float),
                   np.array(d["eigenvalues"], dtype=float), int(d["retained_count"]))


def retained_for(eigenvalues, variance: float = 0.80) -> int:
    lam = np.asarray(eigenvalues, dtype=float)
    total = lam.sum()
    if total <= 0:
        return 1
    ratio = np.cumsum(lam) / total
    return int(np.searchsorted(ratio, variance - 1e-12, side="left")) + 1


def pca_fit(X, variance: float = 0.80) -> PcaModel:
    """Eigendecomposition of the sample covariance; keeps the fewest components
    whose eigenvalues reach ``variance`` of the total."""
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if n < d:
        log.warning("PCA fitted on %d samples for %d features", n, d)
    mean = X.mean(axis=0)
    C = np.cov(X - mean, rowvar=False, ddof=1) if n > 1 else np.zeros((d, d))
    C = np.atleast_2d(C)
    lam, vecs = np.linalg.eigh(C)
    order = np.argsort(lam, kind="stable")[::-1]
    lam = np.clip(lam[order], 0.0, None)
    comps = vecs[:, order].T
    # fix the sign so that the largest-magnitude loading is positive
    flip = np.sign(comps[np.arange(d), np.argmax(np.abs(comps), axis=1)])
    comps = comps * np.where(flip == 0, 1.0, flip)[:, None]
    return PcaModel(mean, comps, lam, retained_for(lam, variance))


def pca_transform(m: PcaModel, X):
    return m.transform(X)
