"""Binary RBF-kernel SVM trained by SMO with second-order working-set selection."""
from __future__ import annotations

import logging
import warnings
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

TAU = 1e-12


class NonConvergence(RuntimeWarning):
    pass


def rbf(A, B, gamma):
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    d2 = np.sum((A[:, None, :] - B[None, :, :]) ** 2, axis=2)
    return np.exp(-gamma * d2)


class _KernelColumns:
    """Lazily computed kernel columns with a bounded LRU cache."""

    def __init__(self, X, gamma, budget_bytes=64 << 20):
        self.X = X
        self.gamma = gamma
        self.cap = max(2, budget_bytes // (8 * max(len(X), 1)))
        self.cache = OrderedDict()

    def __call__(self, i):
        col = self.cache.get(i)
        if col is not None:
            self.cache.move_to_end(i)
            return col
        diff = self.X - self.X[i]
        col = np.exp(-self.gamma * np.sum(diff * diff, axis=1))
        self.cache[i] = col
        if len(self.cache) > self.cap:
            self.cache.popitem(last=False)
        return col


@dataclass(frozen=True, eq=False)
class SvmRbf:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float
    gamma: float
    converged: bool = True
    iterations: int = 0

    kind = "svm"

    def decision_function(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty(len(X))
        for s in range(0, len(X), 256):
            out[s:s + 256] = rbf(X[s:s + 256], self.support_vectors, self.gamma) @ self.dual_coef
        return out + self.bias

    def predict(self, X):
        return (self.decision_function(X) >= 0).astype(int)

    def to_dict(self):
        return {"kind": self.kind, "n_features": self.support_vectors.shape[1],
                "support_vectors": self.support_vectors.tolist(),
                "dual_coef": self.dual_coef.tolist(), "bias": self.bias, "gamma": self.gamma,
                "converged": self.converged, "iterations": self.iterations}

    @classmethod
    def from_dict(cls, d):
        sv = np.array(d["support_vectors"], dtype=float).reshape(-1, int(d["n_features"]))
        return cls(sv,
                   np.array(d["dual_coef"], dtype=float), float(d["bias"]), float(d["gamma"]),
                   bool(d.get("converged", True)), int(d.get("iterations", 0)))


def train_svm_rbf(X, labels, C: float = 1.0, gamma=None, tol: float = 1e-3,
                  max_passes: int = 10_000) -> SvmRbf:
    """Solve the soft-margin dual with SMO (maximal-violating pair, second order).

    ``gamma`` defaults to ``1 / n_features``. The solver stops when the KKT
    violation gap drops below ``tol`` or after ``max_passes * n`` pair updates,
    in which case a NonConvergence warning is issued and the partial solution
    is returned with ``converged=False``.
    """
    X = np.asarray(X, dtype=float)
    y = np.where(np.asarray(labels) > 0, 1.0, -1.0)
    n, d = X.shape
    if gamma is None:
        gamma = 1.0 / d
    if np.all(y == y[0]):
        # one class only: constant decision with the right sign
        return SvmRbf(np.zeros((0, d)), np.zeros(0), float(y[0]), gamma)
    col = _KernelColumns(X, gamma)
    alpha = np.zeros(n)
    G = -np.ones(n)
    max_iter = max_passes * n
    it = 0
    converged = False
    while it < max_iter:
        yG = -y * G
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        i = int(np.argmax(np.where(up, yG, -np.inf)))
        m_val = yG[i]
        M_val = np.min(np.where(low, yG, np.inf))
        if m_val - M_val < tol:
            converged = True
            break
        Ki = col(i)
        b = m_val - yG
        a = 2.0 - 2.0 * Ki  # K_ii = K_tt = 1 for RBF
        a = np.where(a > 0, a, TAU)
        cand = low & (yG < m_val)
        obj = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(obj))
        Kj = col(j)
        Kij = Ki[j]
        ai_old, aj_old = alpha[i], alpha[j]
        quad = max(2.0 - 2.0 * Kij, TAU)
        if y[i] != y[j]:
            delta = (-G[i] - G[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            delta = (G[i] - G[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        # Q[:, t] = y * y_t * K[:, t]
        G += y * (y[i] * (ai - ai_old) * Ki + y[j] * (aj - aj_old) * Kj)
        it += 1
    if not converged:
        warnings.warn(NonConvergence(f"SMO stopped after {it} updates"), stacklevel=2)

    yG = y * G
    at_up = alpha >= C
    at_low = alpha <= 0
    free = ~at_up & ~at_low
    if free.any():
        rho = float(yG[free].mean())
    else:
        ub_mask = (at_up & (y < 0)) | (at_low & (y > 0))
        lb_mask = (at_up & (y > 0)) | (at_low & (y < 0))
        ub = yG[ub_mask].min() if ub_mask.any() else np.inf
        lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
        rho = float((ub + lb) / 2)
    sv = alpha > 0
    return SvmRbf(X[sv], alpha[sv] * y[sv], -rho, float(gamma), converged, it)


def predict_svm(model: SvmRbf, rows):
    return model.predict(rows)
