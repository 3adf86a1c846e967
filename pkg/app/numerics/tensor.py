"""Dense float64 tensor with a dynamic reverse-mode tape.

Each operation records its parents and a closure mapping the output gradient
to one gradient per tracked parent. Nodes carry a process-wide sequence number
taken at creation; parents are always created before children, so ascending
sequence order is a topological order and :meth:`Tensor.backward` walks it in
reverse, visiting every node once.
"""
from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Any, Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ContractError, DimensionError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[Any]]

_local = threading.local()
_SEQ = itertools.count()


def grad_enabled() -> bool:
    return getattr(_local, "grad_enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Run operations without recording them (inference, frozen encoders)."""
    prev = grad_enabled()
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = prev


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` over the axes broadcasting added to reach ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, dim in enumerate(shape):
        if dim == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


class Tensor:
    def __init__(self, data: ArrayLike, requires_grad: bool = False, _op: str = "") -> None:
        if isinstance(data, Tensor):
            data = data.data
        self.data: np.ndarray = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: Tuple[Tensor, ...] = ()
        self._backward: Optional[BackwardFn] = None
        self._op = _op
        self._seq = next(_SEQ)

    # -- construction -----------------------------------------------------
    @staticmethod
    def lift(x: ArrayLike) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    @staticmethod
    def from_op(data: np.ndarray, parents: Sequence["Tensor"], backward: BackwardFn, op: str) -> "Tensor":
        tracked = grad_enabled() and any(p.requires_grad for p in parents)
        out = Tensor(data, requires_grad=tracked, _op=op)
        if tracked:
            out._parents = tuple(parents)
            out._backward = backward
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}, op={self._op or 'leaf'})"

    # -- elementwise ------------------------------------------------------
    def __add__(self, other: ArrayLike) -> "Tensor":
        o = Tensor.lift(other)
        a_shape, b_shape = self.shape, o.shape

        def back(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
            return unbroadcast(g, a_shape), unbroadcast(g, b_shape)

        return Tensor.from_op(self.data + o.data, (self, o), back, "add")

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return Tensor.from_op(-self.data, (self,), lambda g: (-g,), "neg")

    def __sub__(self, other: ArrayLike) -> "Tensor":
        o = Tensor.lift(other)
        a_shape, b_shape = self.shape, o.shape

        def back(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
            return unbroadcast(g, a_shape), unbroadcast(-g, b_shape)

        return Tensor.from_op(self.data - o.data, (self, o), back, "sub")

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return Tensor.lift(other) - self

    def __mul__(self, other: ArrayLike) -> "Tensor":
        o = Tensor.lift(other)
        a, b = self.data, o.data

        def back(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
            return unbroadcast(g * b, a.shape), unbroadcast(g * a, b.shape)

        return Tensor.from_op(a * b, (self, o), back, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        o = Tensor.lift(other)
        a, b = self.data, o.data

        def back(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
            return unbroadcast(g / b, a.shape), unbroadcast(-g * a / (b * b), b.shape)

        return Tensor.from_op(a / b, (self, o), back, "div")

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return Tensor.lift(other) / self

    def __pow__(self, exponent: float) -> "Tensor":
        a = self.data
        p = float(exponent)
        return Tensor.from_op(a ** p, (self,), lambda g: (g * p * a ** (p - 1.0),), "pow")

    def tanh(self) -> "Tensor":
        y = np.tanh(self.data)
        return Tensor.from_op(y, (self,), lambda g: (g * (1.0 - y * y),), "tanh")

    def exp(self) -> "Tensor":
        y = np.exp(self.data)
        return Tensor.from_op(y, (self,), lambda g: (g * y,), "exp")

    # -- linear algebra ---------------------------------------------------
    def matmul(self, other: ArrayLike) -> "Tensor":
        o = Tensor.lift(other)
        a, b = self.data, o.data
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
        try:
            out = np.matmul(a, b)
        except ValueError as exc:
            raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}") from exc

        def back(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
            ga = np.matmul(g, np.swapaxes(b, -1, -2)) if self.requires_grad else None
            gb = np.matmul(np.swapaxes(a, -1, -2), g) if o.requires_grad else None
            return (
                None if ga is None else unbroadcast(ga, a.shape),
                None if gb is None else unbroadcast(gb, b.shape),
            )

        return Tensor.from_op(out, (self, o), back, "matmul")

    __matmul__ = matmul

    # -- shape ------------------------------------------------------------
    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        return Tensor.from_op(self.data.reshape(shape), (self,), lambda g: (g.reshape(old),), "reshape")

    def transpose(self, *axes: int) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(axes))
        return Tensor.from_op(self.data.transpose(axes), (self,), lambda g: (g.transpose(inverse),), "transpose")

    def swapaxes(self, a1: int, a2: int) -> "Tensor":
        return Tensor.from_op(np.swapaxes(self.data, a1, a2), (self,), lambda g: (np.swapaxes(g, a1, a2),), "swapaxes")

    def __getitem__(self, idx: Any) -> "Tensor":
        shape = self.shape

        def back(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
            full = np.zeros(shape, dtype=np.float64)
            np.add.at(full, idx, g)
            return (full,)

        return Tensor.from_op(self.data[idx], (self,), back, "getitem")

    # -- reductions -------------------------------------------------------
    def sum(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        shape = self.shape

        def back(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
            if axis is not None and not keepdims:
                axes = (axis,) if isinstance(axis, int) else tuple(axis)
                for ax in sorted(a % len(shape) for a in axes):
                    g = np.expand_dims(g, ax)
            elif axis is None and not keepdims:
                g = np.reshape(g, (1,) * len(shape))
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor.from_op(self.data.sum(axis=axis, keepdims=keepdims), (self,), back, "sum")

    def mean(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.data.size
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(count))

    # -- autodiff ---------------------------------------------------------
    def backward(self) -> None:
        """Populate ``grad`` on every tracked leaf reachable from this scalar.

        Leaf gradients accumulate across calls until :meth:`zero_grad`;
        ``data`` buffers are never written.
        """
        if self.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise ContractError("backward on a tensor that no tracked operation produced")
        graph = Graph.trace(self)
        pending = {id(self): np.ones_like(self.data)}
        for node in reversed(graph.nodes):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pg if key not in pending else pending[key] + pg


class Graph:
    """Tracked nodes reachable from an output, in execution order."""

    def __init__(self, nodes: List[Tensor]) -> None:
        self.nodes = nodes

    @classmethod
    def trace(cls, output: Tensor) -> "Graph":
        seen = {id(output)}
        stack = [output]
        nodes: List[Tensor] = []
        while stack:
            node = stack.pop()
            nodes.append(node)
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    seen.add(id(parent))
                    stack.append(parent)
        nodes.sort(key=lambda n: n._seq)
        return cls(nodes)

    def __len__(self) -> int:
        return len(self.nodes)


def parameter(data: ArrayLike, requires_grad: bool = True) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64, copy=True), requires_grad=requires_grad, _op="param")
