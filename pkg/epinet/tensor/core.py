"""Core tensor primitives and error types.

Tensors are plain ``numpy.ndarray`` values laid out (N, C, H, W), row-major
with W fastest. Every layer is built on the three primitives here:
``im2col`` (patch extraction on a strided grid), ``matmul`` and the adjoint
``col2im_accumulate``.
"""

from __future__ import annotations

import contextvars
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from epinet.config import DEBUG_CHECKS
from epinet.utils.types import Shape, Tensor


class EpinetError(Exception):
    """Base exception for every epinet error."""


class TensorError(EpinetError):
    """Custom exception for dimension, range and non-finite value errors."""


@dataclass
class InnerProductCounter:
    """Running count of multiply-accumulates performed by ``matmul``."""

    macs: int = 0


_ACTIVE_COUNTERS: contextvars.ContextVar[tuple[InnerProductCounter, ...]] = (
    contextvars.ContextVar("epinet_counters", default=())
)


@contextmanager
def inner_product_counter() -> Iterator[InnerProductCounter]:
    """Count multiply-accumulates of every ``matmul`` run inside the block.

    Yields:
        InnerProductCounter: Counter whose ``macs`` grows by m·k·n per product.
    """
    counter = InnerProductCounter()
    token = _ACTIVE_COUNTERS.set((*_ACTIVE_COUNTERS.get(), counter))
    try:
        yield counter
    finally:
        _ACTIVE_COUNTERS.reset(token)


def check_finite(array: Tensor, where: str, *, force: bool = False) -> Tensor:
    """Raise when ``array`` holds NaN or Inf and checks are enabled.

    Args:
        array: Array to inspect.
        where: Name of the producing operation, used in the error message.
        force: Check even when ``EPINET_DEBUG`` is off.

    Returns:
        The array, unchanged.

    Raises:
        TensorError: If a non-finite value is found.
    """
    if (DEBUG_CHECKS or force) and not np.all(np.isfinite(array)):
        bad = int(np.size(array) - np.count_nonzero(np.isfinite(array)))
        raise TensorError(f"{where}: {bad} non-finite value(s)")
    return array


def output_side(size: int, window: int, stride: int, layer: str = "input") -> int:
    """Number of valid window placements along one axis.

    Args:
        size: Input extent along the axis.
        window: Window extent.
        stride: Step between placements.
        layer: Layer name used in error messages.

    Returns:
        ⌊(size − window)/stride⌋ + 1.

    Raises:
        TensorError: If the window does not fit or the stride is not positive.
    """
    if stride < 1:
        raise TensorError(f"{layer}: stride must be >= 1, got {stride}")
    if window < 1 or window > size:
        raise TensorError(
            f"{layer}: window {window} does not fit inside extent {size}"
        )
    return (size - window) // stride + 1


@dataclass(frozen=True)
class PatchMatrix:
    """Patches of a 4-axis tensor flattened into matrix rows.

    Attributes:
        data: (rows, C·W·W) array; each row is a channel-major patch.
        input_shape: Shape of the tensor the patches came from.
        filter_size: Patch side W.
        stride: Grid stride.
    """

    data: Tensor
    input_shape: Shape
    filter_size: int
    stride: int

    @property
    def grid(self) -> tuple[int, int]:
        """Return the (rows, cols) count of patch sites per image."""
        _, _, h, w = self.input_shape
        return (
            (h - self.filter_size) // self.stride + 1,
            (w - self.filter_size) // self.stride + 1,
        )

    @property
    def origin(self) -> np.ndarray:
        """Return an (rows, 3) array of (image, y, x) sites, one per row."""
        n = self.input_shape[0]
        out_h, out_w = self.grid
        img, y, x = np.meshgrid(
            np.arange(n),
            np.arange(out_h) * self.stride,
            np.arange(out_w) * self.stride,
            indexing="ij",
        )
        return np.stack([img.ravel(), y.ravel(), x.ravel()], axis=1)


def im2col(
    input: Tensor, filter_size: int, stride: int, layer: str = "input"
) -> PatchMatrix:
    """Extract valid patches on a regular grid into matrix rows.

    Rows are ordered (image, y, x); columns are (channel, dy, dx).

    Args:
        input: (N, C, H, W) tensor.
        filter_size: Patch side.
        stride: Grid stride.
        layer: Layer name used in error messages.

    Returns:
        PatchMatrix with N·out_h·out_w rows.

    Raises:
        TensorError: If the input is not 4-axis or the patch does not fit.
    """
    if input.ndim != 4:
        raise TensorError(f"{layer}: expected a 4-axis tensor, got {input.shape}")
    n, c, h, w = input.shape
    out_h = output_side(h, filter_size, stride, layer)
    out_w = output_side(w, filter_size, stride, layer)
    windows = sliding_window_view(input, (filter_size, filter_size), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride][:, :, :out_h, :out_w]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(
        n * out_h * out_w, c * filter_size * filter_size
    )
    return PatchMatrix(
        data=np.ascontiguousarray(cols),
        input_shape=(n, c, h, w),
        filter_size=filter_size,
        stride=stride,
    )


def matmul(a: Tensor | PatchMatrix, b: Tensor) -> Tensor:
    """Multiply two matrices, counting multiply-accumulates.

    Args:
        a: (m, k) matrix or patch matrix.
        b: (k, n) matrix.

    Returns:
        (m, n) product.

    Raises:
        TensorError: If the operands are not matrices with agreeing inner sizes.
    """
    left = a.data if isinstance(a, PatchMatrix) else a
    if left.ndim != 2 or b.ndim != 2 or left.shape[1] != b.shape[0]:
        raise TensorError(
            f"matmul: cannot multiply {left.shape} by {b.shape}"
        )
    m, k = left.shape
    for counter in _ACTIVE_COUNTERS.get():
        counter.macs += m * k * b.shape[1]
    return check_finite(np.matmul(left, b), "matmul")


def col2im_accumulate(
    grads: Tensor | PatchMatrix, into: Tensor, filter_size: int, stride: int
) -> None:
    """Scatter-add patch rows back onto the tensor they were extracted from.

    This is the adjoint of ``im2col``: overlapping patch sites sum.

    Args:
        grads: (rows, C·W·W) patch gradients in ``im2col`` row order.
        into: (N, C, H, W) tensor updated in place.
        filter_size: Patch side used by the forward extraction.
        stride: Grid stride used by the forward extraction.

    Raises:
        TensorError: If the shapes do not match the forward extraction.
    """
    rows = grads.data if isinstance(grads, PatchMatrix) else grads
    n, c, h, w = into.shape
    out_h = output_side(h, filter_size, stride)
    out_w = output_side(w, filter_size, stride)
    expected = (n * out_h * out_w, c * filter_size * filter_size)
    if rows.shape != expected:
        raise TensorError(
            f"col2im: patch gradients {rows.shape} do not match {expected}"
        )
    patches = rows.reshape(n, out_h, out_w, c, filter_size, filter_size)
    patches = patches.transpose(0, 3, 4, 5, 1, 2)
    y_end = stride * (out_h - 1) + 1
    x_end = stride * (out_w - 1) + 1
    for dy in range(filter_size):
        for dx in range(filter_size):
            into[:, :, dy : dy + y_end : stride, dx : dx + x_end : stride] += patches[
                :, :, dy, dx
            ]
