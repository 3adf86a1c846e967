"""Neural-network operations on :class:`Tensor` with analytic backward rules."""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..errors import DimensionError, NumericError, TokenIndexError
from .tensor import Tensor

IGNORE_INDEX = -100
NEG_INF = -1e9
_GELU_C = float(np.sqrt(2.0 / np.pi))


def stable_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    if np.isnan(x).any():
        raise NumericError("softmax input contains NaN")
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def stable_log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    if np.isnan(x).any():
        raise NumericError("log_softmax input contains NaN")
    shifted = x - np.max(x, axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    y = stable_softmax(x.data, axis=axis)

    def back(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return Tensor.from_op(y, (x,), back, "softmax")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    n = x.shape[-1] if x.ndim else 0
    if n < 2:
        raise DimensionError(f"layer_norm needs last axis >= 2, got shape {x.shape}")
    if gain.shape != (n,) or bias.shape != (n,):
        raise DimensionError(f"layer_norm affine shapes {gain.shape}/{bias.shape} do not match width {n}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = xhat * gain.data + bias.data
    lead = tuple(range(x.ndim - 1))

    def back(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        dxhat = g * gain.data
        dx = inv / n * (
            n * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return Tensor.from_op(out, (x, gain, bias), back, "layer_norm")


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation: 0.5 x (1 + tanh(c (x + 0.044715 x^3)))."""
    a = x.data
    t = np.tanh(_GELU_C * (a + 0.044715 * a ** 3))
    out = 0.5 * a * (1.0 + t)

    def back(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        sech2 = 1.0 - t * t
        d = 0.5 * (1.0 + t) + 0.5 * a * sech2 * _GELU_C * (1.0 + 3 * 0.044715 * a * a)
        return (g * d,)

    return Tensor.from_op(out, (x,), back, "gelu")


def embedding(weight: Tensor, ids: np.ndarray) -> Tensor:
    idx = np.asarray(ids, dtype=np.int64)
    vocab = weight.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= vocab):
        raise TokenIndexError(f"token id out of range for vocabulary of {vocab}")
    shape = weight.shape

    def back(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        full = np.zeros(shape, dtype=np.float64)
        np.add.at(full, idx, g)
        return (full,)

    return Tensor.from_op(weight.data[idx], (weight,), back, "embedding")


def dropout(x: Tensor, p: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    if not training or p <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= p).astype(np.float64) / (1.0 - p)
    return Tensor.from_op(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


def cross_entropy(logits: Tensor, targets: np.ndarray, ignore_index: int = IGNORE_INDEX) -> Tensor:
    """Mean token NLL (natural log) over positions whose target is not ``ignore_index``."""
    vocab = logits.shape[-1]
    flat = logits.data.reshape(-1, vocab)
    tgt = np.asarray(targets, dtype=np.int64).reshape(-1)
    if tgt.shape[0] != flat.shape[0]:
        raise DimensionError(f"cross_entropy: {flat.shape[0]} positions vs {tgt.shape[0]} targets")
    valid = tgt != ignore_index
    if np.any((tgt[valid] < 0) | (tgt[valid] >= vocab)):
        raise TokenIndexError(f"target id out of range for vocabulary of {vocab}")
    count = int(valid.sum())
    shape = logits.shape
    if count == 0:
        return Tensor.from_op(np.array(0.0), (logits,), lambda g: (np.zeros(shape),), "cross_entropy")
    logp = stable_log_softmax(flat, axis=-1)
    rows = np.nonzero(valid)[0]
    loss = -logp[rows, tgt[rows]].sum() / count

    def back(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        grad = np.exp(logp)
        grad[rows, tgt[rows]] -= 1.0
        grad[~valid] = 0.0
        return ((grad * (float(g) / count)).reshape(shape),)

    return Tensor.from_op(np.array(loss), (logits,), back, "cross_entropy")


def mse_loss(pred: Tensor, target: np.ndarray, weights: Optional[np.ndarray] = None) -> Tensor:
    """Mean squared error; ``weights`` selects (and weights) rows of the last axis."""
    diff = pred - Tensor(target)
    sq = diff * diff
    if weights is None:
        return sq.mean()
    w = np.asarray(weights, dtype=np.float64)[..., None]
    denom = max(float(w.sum()) * pred.shape[-1], 1.0)
    return (sq * w).sum() * (1.0 / denom)
