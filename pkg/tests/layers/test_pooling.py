"""Tests for epinet.layers.pooling."""

from __future__ import annotations

import numpy as np
import pytest

from epinet.layers.pooling import maxpool_backward, maxpool_forward, maxpool_margin
from epinet.tensor import TensorError


class TestMaxPool:
    """Tests for max-pooling forward, backward and margin."""

    def test_forward__overlapping_windows(self) -> None:
        """3×3 windows with stride 2 overlap by one row and column."""
        x = np.arange(25.0).reshape(1, 1, 5, 5)
        out, argmax = maxpool_forward(x, 3, 2)

        np.testing.assert_array_equal(out[0, 0], [[12, 14], [22, 24]])
        assert argmax.offsets[0, 0].reshape(-1, 2).tolist() == [[2, 2]] * 4

    def test_forward__ties_pick_first_site(self) -> None:
        """Equal values resolve to the first row-major site."""
        _, argmax = maxpool_forward(np.zeros((1, 1, 2, 2)), 2, 2)
        assert argmax.offsets[0, 0, 0, 0].tolist() == [0, 0]

    def test_backward__overlaps_accumulate(self) -> None:
        """A site that wins two windows receives both gradients."""
        x = np.zeros((1, 1, 5, 5))
        x[0, 0, 2, 2] = 1.0
        out, argmax = maxpool_forward(x, 3, 2)

        grad = maxpool_backward(np.ones_like(out), x.shape, argmax, 3, 2)

        assert grad[0, 0, 2, 2] == 4.0
        assert grad.sum() == 4.0

    def test_backward__rejects_mismatched_map(self) -> None:
        """The argmax map must match the gradient."""
        _, argmax = maxpool_forward(np.zeros((1, 1, 4, 4)), 2, 2)
        with pytest.raises(TensorError, match="does not match"):
            maxpool_backward(np.ones((1, 1, 1, 1)), (1, 1, 4, 4), argmax, 2, 2)

    def test_margin(self) -> None:
        """The margin is the smallest winner/runner-up gap."""
        x = np.array([[[[1.0, 4.0], [3.0, 0.0]]]])
        assert maxpool_margin(x, 2, 2) == 1.0
        assert maxpool_margin(x, 1, 1) == float("inf")
