"""Tests for epinet.layers.conv."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from epinet.layers.conv import (
    ConvBank,
    conv_backward,
    conv_forward,
    conv_pool_backward,
    conv_pool_forward,
    init_conv_bank,
)
from epinet.layers.pooling import maxpool_backward, maxpool_forward
from epinet.tensor import TensorError


def test_conv_forward__direct_sum() -> None:
    """Each output is the inner product of a filter and a patch."""
    rng = np.random.default_rng(0)
    bank = init_conv_bank(rng, 2, 3, 3, stride=2, std=1.0, dtype=np.float64)
    x = rng.standard_normal((1, 3, 7, 7))

    out = conv_forward(x, bank)

    assert out.shape == (1, 2, 3, 3)
    patch = x[0, :, 2:5, 4:7]
    assert out[0, 1, 1, 2] == pytest.approx(np.sum(patch * bank.weights[1]), rel=1e-12)


def test_conv_forward__channel_mismatch() -> None:
    """Reject inputs with the wrong channel count."""
    bank = init_conv_bank(np.random.default_rng(0), 2, 3, 3)
    with pytest.raises(TensorError, match="channels"):
        conv_forward(np.zeros((1, 1, 5, 5), dtype=np.float32), bank)


def test_conv_bank__rejects_flat_weights() -> None:
    """Filters must be 4-axis."""
    with pytest.raises(TensorError, match="conv weights"):
        ConvBank(weights=np.zeros((2, 9)), biases=np.zeros(2))


def test_conv_backward__is_adjoint() -> None:
    """⟨conv(x), g⟩ equals ⟨x, ∂x⟩ and ⟨w, ∂w⟩."""
    rng = np.random.default_rng(1)
    bank = init_conv_bank(rng, 4, 2, 3, stride=2, std=1.0, dtype=np.float64)
    x = rng.standard_normal((2, 2, 9, 9))
    out = conv_forward(x, bank)
    g = rng.standard_normal(out.shape)

    grad_input, grad_weights = conv_backward(g, x, bank)

    assert np.sum(out * g) == pytest.approx(np.sum(x * grad_input), rel=1e-12)
    expected = np.sum(bank.weights * grad_weights)
    assert np.sum(out * g) == pytest.approx(expected, rel=1e-12)


def test_conv_backward__shape_mismatch() -> None:
    """Reject gradients of another geometry."""
    bank = init_conv_bank(np.random.default_rng(0), 2, 1, 3, dtype=np.float64)
    with pytest.raises(TensorError, match="does not match"):
        conv_backward(np.zeros((1, 2, 2, 2)), np.zeros((1, 1, 5, 5)), bank)


def test_conv_bank__rejects_zero_stride() -> None:
    """The input stride is at least 1."""
    with pytest.raises(TensorError, match="stride"):
        ConvBank(weights=np.zeros((1, 1, 3, 3)), biases=np.zeros(1), stride=0)


@pytest.mark.parametrize(
    ("stride", "pool", "pool_stride"), [(1, 3, 2), (1, 2, 2), (2, 3, 1)]
)
def test_conv_then_maxpool__matches_direct_max(
    stride: int, pool: int, pool_stride: int
) -> None:
    """conv followed by maxpool is the max of filter responses over each window."""
    rng = np.random.default_rng(4)
    bank = init_conv_bank(rng, 3, 2, 3, stride=stride, std=1.0, dtype=np.float64)
    x = rng.standard_normal((2, 2, 11, 11))

    pooled, _ = maxpool_forward(conv_forward(x, bank), pool, pool_stride)

    for n, k, i, j in itertools.product(
        range(2), range(3), range(pooled.shape[2]), range(pooled.shape[3])
    ):
        responses = []
        for a, b in itertools.product(range(pool), range(pool)):
            y = (i * pool_stride + a) * stride
            z = (j * pool_stride + b) * stride
            responses.append(np.sum(x[n, :, y : y + 3, z : z + 3] * bank.weights[k]))
        assert pooled[n, k, i, j] == pytest.approx(max(responses), rel=1e-12)


def test_conv_pool__equals_conv_then_maxpool() -> None:
    """The bank's own pooling matches explicit conv and maxpool calls both ways."""
    rng = np.random.default_rng(8)
    bank = init_conv_bank(
        rng, 3, 2, 3, pool=3, pool_stride=2, std=1.0, dtype=np.float64
    )
    x = rng.standard_normal((2, 2, 11, 11))

    pooled, responses, argmax = conv_pool_forward(x, bank)
    want, want_argmax = maxpool_forward(conv_forward(x, bank), 3, 2)
    np.testing.assert_array_equal(pooled, want)
    np.testing.assert_array_equal(argmax.offsets, want_argmax.offsets)

    grad = rng.standard_normal(pooled.shape)
    got = conv_pool_backward(grad, x, bank, responses.shape, argmax)
    routed = maxpool_backward(grad, responses.shape, want_argmax, 3, 2)
    for a, b in zip(got, conv_backward(routed, x, bank)):
        np.testing.assert_array_equal(a, b)


def test_conv_pool__unit_window_is_plain_conv() -> None:
    """D = 1 returns the responses themselves and no argmax."""
    rng = np.random.default_rng(1)
    bank = init_conv_bank(rng, 2, 1, 3, dtype=np.float64)
    x = rng.standard_normal((1, 1, 5, 5))

    pooled, responses, argmax = conv_pool_forward(x, bank)
    assert pooled is responses
    assert argmax is None
