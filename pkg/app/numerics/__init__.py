from .tensor import Graph, Tensor, no_grad, parameter
from .ops import cross_entropy, embedding, gelu, layer_norm, softmax

__all__ = [
    "Graph",
    "Tensor",
    "cross_entropy",
    "embedding",
    "gelu",
    "layer_norm",
    "no_grad",
    "parameter",
    "softmax",
]
