"""LSTM sequence classifier with hand-written backpropagation through time.

Network: LSTM(H) -> last valid hidden state -> Dense(25, ReLU) -> Dense(1, sigmoid).
Gate blocks in the stacked weight matrices are ordered input, forget,
candidate, output.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

log = logging.getLogger(__name__)

PARAM_NAMES = ("W", "U", "b", "Wd", "bd", "wo", "bo")


class NonFiniteLoss(FloatingPointError):
    pass


class LengthMismatch(ValueError):
    pass


class EmptySequence(ValueError):
    pass


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True)
class LstmParams:
    blocks: int = 200
    recurrent_dropout: float = 0.2
    dense_units: int = 25
    max_epochs: int = 500
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 16
    clip_norm: float = 5.0
    # stop once the epoch loss has improved by less than this over `patience` epochs
    patience: int = 20
    min_improvement: float = 1e-4


@dataclass(frozen=True, eq=False)
class SequenceDataset:
    sequences: np.ndarray  # (N, T, d)
    labels: np.ndarray  # (N,)
    mask: np.ndarray  # (N, T) bool
    session_ids: tuple = ()


def pad_sequence(vectors, T: int, fractions=None):
    """Fit a session's window vectors into exactly ``T`` steps.

    Longer sessions keep the ``T`` least-interpolated windows (temporal order
    preserved); shorter ones are pre-padded with zero vectors.
    Returns ``(seq, mask)``.
    """
    V = np.asarray(vectors, dtype=float)
    n, d = V.shape
    if n > T:
        frac = np.zeros(n) if fractions is None else np.asarray(fractions, dtype=float)
        keep = sorted(sorted(range(n), key=lambda i: (frac[i], i))[:T])
        V = V[keep]
        n = T
    seq = np.zeros((T, d))
    mask = np.zeros(T, dtype=bool)
    seq[T - n:] = V
    mask[T - n:] = True
    return seq, mask


def init_params(d: int, H: int, dense: int, rng: np.random.Generator) -> dict:
    def glorot(fan_in, fan_out):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=(fan_in, fan_out))

    q, r = np.linalg.qr(rng.standard_normal((4 * H, H)))
    q = q * np.sign(np.diag(r))
    b = np.zeros(4 * H)
    b[H:2 * H] = 1.0  # forget-gate bias
    return {
        "W": glorot(d, 4 * H),
        "U": q.T.copy(),
        "b": b,
        "Wd": glorot(H, dense),
        "bd": np.zeros(dense),
        "wo": glorot(dense, 1)[:, 0],
        "bo": np.zeros(()),
    }


def forward(params, X, mask, drop=None, keep_cache=False, check_bounds=False):
    """Run the network on a batch.

    ``drop`` is an (N, H) recurrent-dropout multiplier (already scaled by
    1/(1-p)) applied to the previous hidden state at every step, or None.
    Masked steps carry the state through unchanged.
    Returns ``(probabilities, logits, cache)``.
    """
    N, T, _ = X.shape
    H = params["U"].shape[0]
    h = np.zeros((N, H))
    c = np.zeros((N, H))
    steps = []
    for t in range(T):
        hd = h if drop is None else h * drop
        z = X[:, t] @ params["W"] + hd @ params["U"] + params["b"]
        i = sigmoid(z[:, :H])
        f = sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = sigmoid(z[:, 3 * H:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        m = mask[:, t, None]
        if keep_cache:
            steps.append((h, c, hd, i, f, g, o, tc, m))
        c = np.where(m, c_new, c)
        h = np.where(m, h_new, h)
        if check_bounds and np.max(np.abs(c)) > t + 1 + 1e-12:
            raise AssertionError(f"cell state exceeds {t + 1} at step {t}")
    pre = h @ params["Wd"] + params["bd"]
    a = np.maximum(pre, 0.0)
    logit = a @ params["wo"] + params["bo"]
    p = sigmoid(logit)
    cache = (X, mask, drop, steps, h, pre, a) if keep_cache else None
    return p, logit, cache


def loss_and_grad(params, X, mask, y, drop=None):
    """Mean binary cross-entropy and BPTT gradients for every parameter."""
    y = np.asarray(y, dtype=float)
    p, logit, cache = forward(params, X, mask, drop, keep_cache=True)
    X, mask, drop, steps, h_last, pre, a = cache
    N = len(y)
    H = params["U"].shape[0]
    loss = float(np.mean(np.logaddexp(0.0, logit) - y * logit))

    dlogit = (p - y) / N
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    grads["wo"] = a.T @ dlogit
    grads["bo"] = np.array(dlogit.sum())
    dpre = np.outer(dlogit, params["wo"]) * (pre > 0)
    grads["Wd"] = h_last.T @ dpre
    grads["bd"] = dpre.sum(axis=0)
    dh = dpre @ params["Wd"].T
    dc = np.zeros_like(dh)
    dz = np.empty((N, 4 * H))
    for t in range(len(steps) - 1, -1, -1):
        h_prev, c_prev, hd, i, f, g, o, tc, m = steps[t]
        dh_new = np.where(m, dh, 0.0)
        dc_new = np.where(m, dc, 0.0)
        dh_carry = dh - dh_new
        dc_carry = dc - dc_new
        do = dh_new * tc
        dc_new = dc_new + dh_new * o * (1.0 - tc * tc)
        dz[:, :H] = dc_new * g * i * (1.0 - i)
        dz[:, H:2 * H] = dc_new * c_prev * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dc_new * i * (1.0 - g * g)
        dz[:, 3 * H:] = do * o * (1.0 - o)
        grads["W"] += X[:, t].T @ dz
        grads["U"] += hd.T @ dz
        grads["b"] += dz.sum(axis=0)
        dhd = dz @ params["U"].T
        dh = (dhd if drop is None else dhd * drop) + dh_carry
        dc = dc_new * f + dc_carry
    return loss, grads


@dataclass(frozen=True, eq=False)
class Lstm:
    params: dict
    hparams: LstmParams = field(default_factory=LstmParams)
    T: int = 20
    epochs_run: int = 0
    loss_history: tuple = ()

    kind = "lstm"

    def predict_proba(self, X, mask):
        X = np.asarray(X, dtype=float)
        mask = np.asarray(mask, dtype=bool)
        if X.ndim == 2:
            X, mask = X[None], mask[None]
        if X.shape[1] != self.T or mask.shape != X.shape[:2]:
            raise LengthMismatch(f"expected {self.T} steps, got {X.shape[1]}")
        if not mask.any(axis=1).all():
            raise EmptySequence("sequence has no valid steps")
        return forward(self.params, X, mask)[0]

    def predict(self, X, mask):
        return (self.predict_proba(X, mask) >= 0.5).astype(int)

    def to_dict(self):
        return {"kind": self.kind, "T": self.T, "epochs_run": self.epochs_run,
                "hparams": self.hparams.__dict__,
                "shapes": {k: list(np.shape(v)) for k, v in self.params.items()},
                "params": {k: np.ravel(v).tolist() for k, v in self.params.items()}}

    @classmethod
    def from_dict(cls, d):
        params = {k: np.array(d["params"][k], dtype=float).reshape(d["shapes"][k])
                  for k in PARAM_NAMES}
        return cls(params, LstmParams(**d["hparams"]), int(d["T"]), int(d.get("epochs_run", 0)))


def _clip(grads, max_norm):
    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        return {k: g * scale for k, g in grads.items()}
    return grads


def train_lstm(data: SequenceDataset, hp: LstmParams = LstmParams(), seed: int = 0,
               check_bounds: bool = False) -> Lstm:
    """Mini-batch Adam training with gradient-norm clipping.

    Recurrent dropout draws one Bernoulli keep-mask per sequence per batch and
    reuses it at every step; with ``recurrent_dropout == 0`` no mask is drawn.
    """
    X = np.asarray(data.sequences, dtype=float)
    mask = np.asarray(data.mask, dtype=bool)
    y = np.asarray(data.labels, dtype=float)
    N, T, d = X.shape
    rng = np.random.default_rng(seed)
    params = init_params(d, hp.blocks, hp.dense_units, rng)
    m1 = {k: np.zeros_like(v) for k, v in params.items()}
    m2 = {k: np.zeros_like(v) for k, v in params.items()}
    p_drop = hp.recurrent_dropout
    step = 0
    history = []
    epoch = 0
    for epoch in range(1, hp.max_epochs + 1):
        order = rng.permutation(N)
        total = 0.0
        for s in range(0, N, hp.batch_size):
            idx = order[s:s + hp.batch_size]
            drop = None
            if p_drop > 0:
                keep = rng.random((len(idx), hp.blocks)) >= p_drop
                drop = keep / (1.0 - p_drop)
            loss, grads = loss_and_grad(params, X[idx], mask[idx], y[idx], drop)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss {loss} at epoch {epoch}, batch starting {s}")
            if check_bounds:
                forward(params, X[idx], mask[idx], drop, check_bounds=True)
            grads = _clip(grads, hp.clip_norm)
            step += 1
            lr_t = hp.learning_rate * np.sqrt(1 - hp.beta2 ** step) / (1 - hp.beta1 ** step)
            for k in params:
                m1[k] = hp.beta1 * m1[k] + (1 - hp.beta1) * grads[k]
                m2[k] = hp.beta2 * m2[k] + (1 - hp.beta2) * grads[k] ** 2
                params[k] = params[k] - lr_t * m1[k] / (np.sqrt(m2[k]) + hp.adam_eps)
            total += loss * len(idx)
        history.append(total / N)
        if (hp.patience and len(history) > hp.patience
                and history[-hp.patience - 1] - history[-1] < hp.min_improvement):
            break
    log.debug("lstm trained %d epochs, final loss %.4g", epoch, history[-1])
    return Lstm(params, hp, T, epoch, tuple(history))


def predict_lstm(model: Lstm, seq, mask) -> tuple[float, int]:
    """Probability and label (1 = High, inclusive at 0.5) for a single sequence."""
    p = float(model.predict_proba(seq, mask)[0])
    return p, int(p >= 0.5)
