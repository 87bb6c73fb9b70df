"""One-hidden-layer sigmoid perceptron trained by full-batch gradient descent."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True, eq=False)
class Mlp:
    W1: np.ndarray  # (d, h)
    b1: np.ndarray
    w2: np.ndarray  # (h,)
    b2: float
    epochs_run: int = 0

    kind = "mlp"

    def predict_proba(self, X):
        H = sigmoid(np.asarray(X, dtype=float) @ self.W1 + self.b1)
        return sigmoid(H @ self.w2 + self.b2)

    def predict(self, X):
        return (self.predict_proba(X) >= 0.5).astype(int)

    def params(self):
        return {"W1": self.W1, "b1": self.b1, "w2": self.w2, "b2": np.array(self.b2)}

    def to_dict(self):
        return {"kind": self.kind, "W1": self.W1.tolist(), "b1": self.b1.tolist(),
                "w2": self.w2.tolist(), "b2": self.b2, "epochs_run": self.epochs_run}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["W1"], dtype=float).reshape(-1, len(d["b1"])),
                   np.array(d["b1"], dtype=float), np.array(d["w2"], dtype=float),
                   float(d["b2"]), int(d.get("epochs_run", 0)))


def loss_and_grad(params: dict, X, y):
    """Mean binary cross-entropy and its gradient with respect to every parameter."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(X)
    H = sigmoid(X @ params["W1"] + params["b1"])
    z2 = H @ params["w2"] + params["b2"]
    p = sigmoid(z2)
    # log-sum-exp form keeps the loss finite for saturated outputs
    loss = float(np.mean(np.logaddexp(0.0, z2) - y * z2))
    dz2 = (p - y) / n
    dH = np.outer(dz2, params["w2"]) * H * (1 - H)
    return loss, {
        "W1": X.T @ dH,
        "b1": dH.sum(axis=0),
        "w2": H.T @ dz2,
        "b2": np.array(dz2.sum()),
    }


def train_mlp(X, y, hidden: int = 5, lr: float = 0.1, max_epochs: int = 500,
              patience: int = 20, min_improvement: float = 1e-6, seed: int = 0) -> Mlp:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    d = X.shape[1]
    rng = np.random.default_rng(seed)
    params = {
        "W1": rng.uniform(-0.5, 0.5, size=(d, hidden)),
        "b1": rng.uniform(-0.5, 0.5, size=hidden),
        "w2": rng.uniform(-0.5, 0.5, size=hidden),
        "b2": np.array(rng.uniform(-0.5, 0.5)),
    }
    history = []
    epoch = 0
    for epoch in range(1, max_epochs + 1):
        loss, grads = loss_and_grad(params, X, y)
        history.append(loss)
        if len(history) > patience and history[-patience - 1] - loss < min_improvement:
            break
        for k in params:
            params[k] = params[k] - lr * grads[k]
    return Mlp(params["W1"], params["b1"], params["w2"], float(params["b2"]), epoch)


def predict_mlp(model: Mlp, rows):
    return model.predict(rows)
