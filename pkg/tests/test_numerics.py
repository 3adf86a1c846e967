import math

import numpy as np
import pytest

from app.errors import ContractError, DimensionError, NumericError, TokenIndexError
from app.numerics.gradcheck import check_gradients
from app.numerics.ops import (
    IGNORE_INDEX,
    cross_entropy,
    dropout,
    embedding,
    gelu,
    layer_norm,
    mse_loss,
    softmax,
    stable_log_softmax,
    stable_softmax,
)
from app.numerics.tensor import Graph, Tensor, no_grad, parameter


def test_softmax_reference_values():
    out = stable_softmax(np.array([1.0, 2.0, 3.0]))
    assert np.allclose(out, [0.09003, 0.24473, 0.66524], atol=1e-5)
    assert math.isclose(out.sum(), 1.0)


def test_softmax_is_shift_invariant_and_finite_for_large_logits():
    x = np.array([1000.0, 1001.0, 1002.0])
    out = stable_softmax(x)
    assert np.all(np.isfinite(out))
    assert np.allclose(out, stable_softmax(x - 1000.0))
    assert np.all(np.isfinite(stable_log_softmax(np.array([-1e4, 0.0, 1e4]))))


def test_softmax_rejects_nan():
    with pytest.raises(NumericError):
        stable_softmax(np.array([1.0, float("nan")]))


def test_layer_norm_two_values():
    out = layer_norm(Tensor([1.0, 3.0]), Tensor(np.ones(2)), Tensor(np.zeros(2)))
    assert np.allclose(out.data, [-1.0, 1.0], atol=1e-4)


def test_layer_norm_needs_width_two():
    with pytest.raises(DimensionError):
        layer_norm(Tensor([[1.0]]), Tensor(np.ones(1)), Tensor(np.zeros(1)))


def test_matmul_values_and_shape_check():
    out = Tensor([[1.0, 2.0], [3.0, 4.0]]) @ Tensor([[1.0], [1.0]])
    assert np.allclose(out.data, [[3.0], [7.0]])
    with pytest.raises(DimensionError):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))


def test_uniform_cross_entropy_is_log_vocab():
    loss = cross_entropy(Tensor(np.zeros((3, 4))), np.array([0, 1, 3]))
    assert math.isclose(loss.item(), math.log(4), rel_tol=1e-12)


def test_cross_entropy_skips_ignored_positions():
    logits = Tensor(np.array([[5.0, 0.0], [0.0, 0.0]]))
    masked = cross_entropy(logits, np.array([IGNORE_INDEX, 1]))
    assert math.isclose(masked.item(), math.log(2), rel_tol=1e-12)
    all_ignored = cross_entropy(logits, np.array([IGNORE_INDEX, IGNORE_INDEX]))
    assert all_ignored.item() == 0.0


def test_cross_entropy_rejects_out_of_range_target():
    with pytest.raises(TokenIndexError):
        cross_entropy(Tensor(np.zeros((1, 3))), np.array([3]))


def test_embedding_rejects_out_of_range_id():
    with pytest.raises(TokenIndexError):
        embedding(Tensor(np.zeros((4, 2))), np.array([4]))


def test_square_derivative():
    x = parameter(3.0)
    (x * x).backward()
    assert math.isclose(float(x.grad), 6.0)


def test_gradients_accumulate_until_zeroed():
    x = parameter(2.0)
    (x * x).backward()
    (x * x).backward()
    assert math.isclose(float(x.grad), 8.0)
    x.zero_grad()
    assert x.grad is None


def test_backward_requires_scalar():
    x = parameter(np.ones(3))
    with pytest.raises(ContractError):
        (x * 2.0).backward()


def test_no_grad_records_nothing():
    x = parameter(np.ones(2))
    with no_grad():
        y = (x * 3.0).sum()
    assert not y.requires_grad
    with pytest.raises(ContractError):
        y.backward()


def test_graph_visits_each_node_once():
    x = parameter(1.5)
    y = x * x
    z = y + y
    graph = Graph.trace(z)
    assert len(graph) == len({id(n) for n in graph.nodes})
    z.backward()
    assert math.isclose(float(x.grad), 4 * 1.5)


def test_dropout_is_identity_at_inference():
    x = Tensor(np.ones((3, 3)))
    assert dropout(x, 0.5, np.random.default_rng(0), training=False) is x


@pytest.mark.parametrize("seed", range(24))
def test_operation_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    rows, width, vocab = (int(v) for v in rng.integers((1, 3, 2), (6, 7, 8)))
    x = parameter(rng.normal(size=(rows, width)))
    w = parameter(rng.normal(size=(width, vocab)))
    g = parameter(rng.normal(size=width) + 1.0)
    b = parameter(rng.normal(size=width))
    targets = rng.integers(vocab, size=rows)
    targets[1:][rng.random(rows - 1) < 0.3] = IGNORE_INDEX

    def loss():
        h = gelu(layer_norm(x, g, b))
        mixed = softmax(h @ h.transpose(), axis=-1) @ h + h
        return cross_entropy(softmax(mixed @ w, axis=-1) * 3.0, targets)

    errors = check_gradients(loss, [x, w, g, b])
    assert max(errors.values()) < 1e-4


def test_embedding_and_mse_gradients():
    rng = np.random.default_rng(1)
    table = parameter(rng.normal(size=(5, 3)))
    target = rng.normal(size=(4, 3))
    ids = np.array([0, 2, 2, 4])

    def loss():
        return mse_loss(embedding(table, ids), target, weights=np.array([1.0, 1.0, 0.0, 1.0]))

    errors = check_gradients(loss, [table])
    assert errors[0] < 1e-5
