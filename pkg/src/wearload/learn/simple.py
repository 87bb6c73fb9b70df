"""k-nearest neighbours and Gaussian naive Bayes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EmptyTrainingSet(ValueError):
    pass


class DegenerateClass(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Knn:
    X: np.ndarray
    y: np.ndarray
    k: int = 3

    kind = "knn"

    def predict(self, Q):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        out = np.empty(len(Q), dtype=int)
        for s in range(0, len(Q), 64):
            B = Q[s:s + 64]
            d2 = np.sum((B[:, None, :] - self.X[None, :, :]) ** 2, axis=2)
            # stable sort: equal distances resolve to the lower training row
            nn = np.argsort(d2, axis=1, kind="stable")[:, : self.k]
            votes = self.y[nn].sum(axis=1)
            out[s:s + 64] = (2 * votes > nn.shape[1]).astype(int)
        return out

    def to_dict(self):
        return {"kind": self.kind, "k": self.k, "X": self.X.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["X"], dtype=float), np.array(d["y"], dtype=int), int(d["k"]))


def train_knn(X, y, k: int = 3) -> Knn:
    X = np.asarray(X, dtype=float)
    if len(X) == 0:
        raise EmptyTrainingSet("kNN needs at least one training row")
    return Knn(X, np.asarray(y, dtype=int), min(k, len(X)))


def predict_knn(model: Knn, rows):
    return model.predict(rows)


@dataclass(frozen=True, eq=False)
class GaussianNB:
    means: np.ndarray  # (2, d)
    variances: np.ndarray
    log_priors: np.ndarray

    kind = "gnb"

    def joint_log_likelihood(self, Q):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        out = np.empty((len(Q), 2))
        for c in range(2):
            v = self.variances[c]
            out[:, c] = (self.log_priors[c]
                         - 0.5 * np.sum(np.log(2.0 * np.pi * v))
                         - 0.5 * np.sum((Q - self.means[c]) ** 2 / v, axis=1))
        return out

    def predict_proba(self, Q):
        jll = self.joint_log_likelihood(Q)
        jll -= jll.max(axis=1, keepdims=True)
        p = np.exp(jll)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, Q):
        # argmax picks Low on an exact tie
        return np.argmax(self.joint_log_likelihood(Q), axis=1)

    def to_dict(self):
        return {"kind": self.kind, "means": self.means.tolist(),
                "variances": self.variances.tolist(), "log_priors": self.log_priors.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["means"]), np.array(d["variances"]), np.array(d["log_priors"]))


def train_gnb(X, y, var_floor: float = 1e-9) -> GaussianNB:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    means, variances, priors = [], [], []
    for c in (0, 1):
        Xc = X[y == c]
        if len(Xc) < 2:
            raise DegenerateClass(f"class {c} has {len(Xc)} rows, need 2")
        means.append(Xc.mean(axis=0))
        variances.append(np.maximum(Xc.var(axis=0), var_floor))
        priors.append(len(Xc) / len(X))
    return GaussianNB(np.array(means), np.array(variances), np.log(np.array(priors)))


def predict_gnb(model: GaussianNB, rows):
    return model.predict(rows)
