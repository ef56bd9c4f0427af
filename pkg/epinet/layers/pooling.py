"""Spatial max-pooling with argmax routing."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from epinet.layers.epitomic import ArgmaxMap
from epinet.tensor import TensorError, output_side
from epinet.utils.types import Tensor


def _windows(input: Tensor, pool: int, stride: int) -> Tensor:
    """Return (N, C, H_out, W_out, pool²) pooling windows."""
    if input.ndim != 4:
        raise TensorError(f"maxpool: expected a 4-axis tensor, got {input.shape}")
    out_h = output_side(input.shape[2], pool, stride, layer="maxpool")
    out_w = output_side(input.shape[3], pool, stride, layer="maxpool")
    windows = sliding_window_view(input, (pool, pool), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride][:, :, :out_h, :out_w]
    return windows.reshape(*windows.shape[:4], pool * pool)


def maxpool_forward(input: Tensor, pool: int, stride: int) -> tuple[Tensor, ArgmaxMap]:
    """Per-channel max over ``pool × pool`` windows.

    Ties resolve to the first site of the window in row-major order. The
    argmax map stores the winner's offset inside its window.

    Args:
        input: (N, C, H, W) tensor.
        pool: Window side D.
        stride: Window stride.

    Returns:
        Pooled tensor and its argmax map.
    """
    windows = _windows(input, pool, stride)
    winner = windows.argmax(axis=-1)
    output = np.take_along_axis(windows, winner[..., None], axis=-1)[..., 0]
    offsets = np.stack([winner // pool, winner % pool], axis=-1).astype(np.uint8)
    return np.ascontiguousarray(output), ArgmaxMap(offsets)


def maxpool_backward(
    grad_out: Tensor,
    input_shape: tuple[int, ...],
    argmax: ArgmaxMap,
    pool: int,
    stride: int,
) -> Tensor:
    """Scatter each upstream gradient onto its window's winning site.

    Returns:
        Gradient with respect to the pooling input.

    Raises:
        TensorError: If the gradient and argmax map disagree.
    """
    if argmax.offsets.shape[:4] != grad_out.shape:
        raise TensorError(
            f"maxpool backward: gradient {grad_out.shape} does not match argmax "
            f"{argmax.offsets.shape[:4]}"
        )
    grad_input = np.zeros(input_shape, dtype=grad_out.dtype)
    out_h, out_w = grad_out.shape[2:]
    y_end = stride * (out_h - 1) + 1
    x_end = stride * (out_w - 1) + 1
    for dy in range(pool):
        for dx in range(pool):
            hit = (argmax.dy == dy) & (argmax.dx == dx)
            grad_input[:, :, dy : dy + y_end : stride, dx : dx + x_end : stride] += (
                np.where(hit, grad_out, 0)
            )
    return grad_input


def maxpool_margin(input: Tensor, pool: int, stride: int) -> float:
    """Smallest winner/runner-up gap over every pooling window."""
    if pool == 1:
        return float("inf")
    top = np.partition(_windows(input, pool, stride), -2, axis=-1)[..., -2:]
    return float(np.min(top[..., 1] - top[..., 0]))
