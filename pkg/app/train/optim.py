"""AdamW with decoupled weight decay over a named learnable parameter set."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from ..errors import ConfigError, ContractError
from ..numerics.tensor import Tensor


@dataclass
class OptimizerState:
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, Optional[np.ndarray]],
    state: OptimizerState,
    lr: float,
    weight_decay: float,
    betas: Tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> OptimizerState:
    """One bias-corrected Adam update preceded by the decay θ ← θ(1 − lr·wd).

    ``params`` must be exactly the learnable set; each one needs a gradient.
    """
    missing = sorted(n for n in params if grads.get(n) is None)
    if missing:
        raise ContractError(f"missing gradient for learnable parameters: {missing}")
    b1, b2 = betas
    state.step += 1
    t = state.step
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1.0 - b1) * g if m is None else b1 * m + (1.0 - b1) * g
        v = (1.0 - b2) * g * g if v is None else b2 * v + (1.0 - b2) * g * g
        state.m[name] = m
        state.v[name] = v
        decayed = p.data * (1.0 - lr * weight_decay)
        p.data = decayed - lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


def clip_grad_norm(params: Mapping[str, Tensor], max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most ``max_norm``."""
    total = float(np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params.values() if p.grad is not None)))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * scale
    return total


class AdamW:
    def __init__(self, params: Mapping[str, Tensor], weight_decay: float = 0.01,
                 betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> None:
        if weight_decay < 0:
            raise ConfigError("weight_decay", "must be non-negative")
        if not (0.0 <= betas[0] < 1.0 and 0.0 <= betas[1] < 1.0):
            raise ConfigError("betas", "must be in [0, 1)")
        self.params = dict(params)
        self.weight_decay = weight_decay
        self.betas = betas
        self.eps = eps
        self.state = OptimizerState()

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self, lr: float) -> None:
        adamw_step(self.params, {n: p.grad for n, p in self.params.items()}, self.state,
                   lr, self.weight_decay, self.betas, self.eps)
