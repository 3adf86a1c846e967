"""Transformer sublayers over a flat ``name -> Tensor`` parameter mapping.

Layers are plain functions that look their weights up by prefix, so the
frozen/learnable partition is a property of parameter names rather than of
module objects.
"""
from typing import Dict, Mapping, Optional

import numpy as np

from ..numerics.ops import NEG_INF, dropout, gelu, layer_norm, softmax
from ..numerics.tensor import Tensor

Params = Mapping[str, Tensor]


def init_linear(params: Dict[str, Tensor], prefix: str, d_in: int, d_out: int,
                rng: np.random.Generator, std: float, zero: bool = False) -> None:
    w = np.zeros((d_in, d_out)) if zero else rng.normal(0.0, std, size=(d_in, d_out))
    params[f"{prefix}.w"] = Tensor(w)
    params[f"{prefix}.b"] = Tensor(np.zeros(d_out))


def init_norm(params: Dict[str, Tensor], prefix: str, d: int) -> None:
    params[f"{prefix}.g"] = Tensor(np.ones(d))
    params[f"{prefix}.b"] = Tensor(np.zeros(d))


def init_attention(params: Dict[str, Tensor], prefix: str, d: int,
                   rng: np.random.Generator, std: float, zero_out: bool = False) -> None:
    for name in ("wq", "wk", "wv"):
        init_linear(params, f"{prefix}.{name}", d, d, rng, std)
    init_linear(params, f"{prefix}.wo", d, d, rng, std, zero=zero_out)


def init_mlp(params: Dict[str, Tensor], prefix: str, d: int, ratio: int,
             rng: np.random.Generator, std: float) -> None:
    init_linear(params, f"{prefix}.fc", d, d * ratio, rng, std)
    init_linear(params, f"{prefix}.proj", d * ratio, d, rng, std)


def linear(x: Tensor, p: Params, prefix: str) -> Tensor:
    return x @ p[f"{prefix}.w"] + p[f"{prefix}.b"]


def norm(x: Tensor, p: Params, prefix: str, eps: float) -> Tensor:
    return layer_norm(x, p[f"{prefix}.g"], p[f"{prefix}.b"], eps)


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    b, length, d = x.shape
    return x.reshape(b, length, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def attention(query: Tensor, memory: Tensor, p: Params, prefix: str, n_heads: int,
              mask: Optional[np.ndarray] = None) -> Tensor:
    """Multi-head attention from ``query`` (B×L×d) over ``memory`` (B×T×d).

    ``mask`` is additive and broadcastable to B×H×L×T (0 keeps, NEG_INF drops).
    """
    b, length, d = query.shape
    q = _split_heads(linear(query, p, f"{prefix}.wq"), n_heads)
    k = _split_heads(linear(memory, p, f"{prefix}.wk"), n_heads)
    v = _split_heads(linear(memory, p, f"{prefix}.wv"), n_heads)
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(d // n_heads))
    if mask is not None:
        scores = scores + mask
    ctx = softmax(scores, axis=-1) @ v
    merged = ctx.transpose(0, 2, 1, 3).reshape(b, length, d)
    return linear(merged, p, f"{prefix}.wo")


def mlp(x: Tensor, p: Params, prefix: str) -> Tensor:
    return linear(gelu(linear(x, p, f"{prefix}.fc")), p, f"{prefix}.proj")


def causal_mask(length: int) -> np.ndarray:
    return np.triu(np.full((length, length), NEG_INF), k=1)


def key_padding_mask(valid: np.ndarray) -> np.ndarray:
    """B×T boolean validity -> B×1×1×T additive mask."""
    return np.where(valid, 0.0, NEG_INF)[:, None, None, :]


def residual(h: Tensor, update: Tensor, rate: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    return h + dropout(update, rate, rng, training)
