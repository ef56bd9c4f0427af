"""Tests for epinet.layers.dense."""

from __future__ import annotations

import numpy as np
import pytest

from epinet.layers.dense import fc_backward, fc_forward, init_fc, softmax, softmax_loss
from epinet.tensor import TensorError


def test_fc_forward__flattens_input() -> None:
    """Inputs are flattened per example before the affine map."""
    weights, biases = init_fc(np.random.default_rng(0), 12, 4, dtype=np.float64)
    biases += 1.0
    x = np.random.default_rng(1).standard_normal((2, 3, 2, 2))

    out = fc_forward(x, weights, biases)

    assert out.shape == (2, 4, 1, 1)
    np.testing.assert_allclose(out[:, :, 0, 0], x.reshape(2, 12) @ weights + 1.0)


def test_fc_forward__feature_mismatch() -> None:
    """Reject inputs of the wrong size."""
    weights, biases = init_fc(np.random.default_rng(0), 5, 2)
    with pytest.raises(TensorError, match="features"):
        fc_forward(np.zeros((1, 4), dtype=np.float32), weights, biases)


def test_fc_backward__shapes_and_bias_sum() -> None:
    """Gradients take their parameter's shape; bias gradients sum the batch."""
    rng = np.random.default_rng(2)
    weights, _ = init_fc(rng, 6, 3, dtype=np.float64)
    x = rng.standard_normal((4, 6, 1, 1))
    g = rng.standard_normal((4, 3, 1, 1))

    grad_input, grad_weights, grad_biases = fc_backward(g, x, weights)

    assert grad_input.shape == x.shape
    assert grad_weights.shape == weights.shape
    np.testing.assert_allclose(grad_biases, g.reshape(4, 3).sum(axis=0))


class TestSoftmaxLoss:
    """Tests for softmax and its log-loss."""

    def test_softmax__rows_sum_to_one(self) -> None:
        """Large logits do not overflow."""
        probs = softmax(np.array([[1000.0, 1000.0], [0.0, np.log(3.0)]]))
        np.testing.assert_allclose(probs, [[0.5, 0.5], [0.25, 0.75]])

    def test_loss__uniform_logits(self) -> None:
        """Equal logits over K classes cost log K."""
        loss, grad = softmax_loss(np.zeros((2, 10)), np.array([3, 7]))
        assert loss == pytest.approx(np.log(10))
        assert grad[0, 3] == pytest.approx((0.1 - 1) / 2)
        assert grad[1, 0] == pytest.approx(0.1 / 2)

    def test_loss__keeps_logit_shape(self) -> None:
        """Gradients come back in the (N, K, 1, 1) layout of the logits."""
        _, grad = softmax_loss(np.zeros((3, 4, 1, 1)), np.array([0, 1, 2]))
        assert grad.shape == (3, 4, 1, 1)
        np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-15)

    def test_loss__label_out_of_range(self) -> None:
        """Labels must index a class."""
        with pytest.raises(TensorError, match="labels must lie"):
            softmax_loss(np.zeros((1, 3)), np.array([3]))

    def test_loss__label_count_mismatch(self) -> None:
        """One label per example."""
        with pytest.raises(TensorError, match="labels for a batch"):
            softmax_loss(np.zeros((2, 3)), np.array([0]))
