"""Central finite-difference gradient checking."""
from typing import Callable, Dict, Sequence

import numpy as np

from .tensor import Tensor


def numeric_grad(fn: Callable[[], Tensor], param: Tensor, step: float = 1e-5) -> np.ndarray:
    """d fn() / d param by central differences; ``param.data`` is restored."""
    if not param.data.flags.c_contiguous:
        param.data = np.ascontiguousarray(param.data)
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        plus = float(fn().data)
        flat[i] = orig - step
        minus = float(fn().data)
        flat[i] = orig
        out[i] = (plus - minus) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(analytic), initial=0.0)), float(np.max(np.abs(numeric), initial=0.0)), 1e-8)
    return float(np.max(np.abs(analytic - numeric), initial=0.0)) / scale


def check_gradients(
    fn: Callable[[], Tensor], params: Sequence[Tensor], step: float = 1e-5
) -> Dict[int, float]:
    """Return the relative error per parameter index."""
    for p in params:
        p.zero_grad()
    fn().backward()
    errors: Dict[int, float] = {}
    for i, p in enumerate(params):
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        errors[i] = relative_error(analytic, numeric_grad(fn, p, step))
    return errors
