"""Strided valid convolution realized as im2col + matmul, with optional pooling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from epinet.config import DEFAULT_INIT_STD, DEFAULT_POOL_STRIDE
from epinet.layers.epitomic import ArgmaxMap
from epinet.layers.pooling import maxpool_backward, maxpool_forward, maxpool_margin
from epinet.tensor import TensorError, col2im_accumulate, im2col, matmul
from epinet.utils.types import Tensor


@dataclass
class ConvBank:
    """K filters of side W with biases and the pooling that follows them.

    Attributes:
        weights: (K, C, W, W) filters.
        biases: (K,) biases, applied by the following ReLU.
        stride: Input stride.
        pool: Max-pooling window D (1 disables pooling).
        pool_stride: Max-pooling stride.
    """

    weights: Tensor
    biases: Tensor
    stride: int = 1
    pool: int = 1
    pool_stride: int = DEFAULT_POOL_STRIDE

    def __post_init__(self) -> None:
        """Validate the bank geometry.

        Raises:
            TensorError: If the bank is malformed.
        """
        if self.weights.ndim != 4 or self.weights.shape[0] < 1:
            raise TensorError(
                f"conv weights must be (K, C, W, W), got {self.weights.shape}"
            )
        if self.stride < 1:
            raise TensorError(f"conv stride must be >= 1, got {self.stride}")
        if self.pool < 1:
            raise TensorError(f"pooling window must be >= 1, got {self.pool}")
        if self.pool_stride < 1:
            raise TensorError(f"pooling stride must be >= 1, got {self.pool_stride}")

    @property
    def filter_size(self) -> int:
        """Return the filter side W."""
        return int(self.weights.shape[2])


def init_conv_bank(
    rng: np.random.Generator,
    count: int,
    channels: int,
    filter_size: int,
    *,
    stride: int = 1,
    pool: int = 1,
    pool_stride: int = DEFAULT_POOL_STRIDE,
    std: float = DEFAULT_INIT_STD,
    dtype: type = np.float32,
) -> ConvBank:
    """Create a conv bank with Gaussian filters and zero biases.

    Returns:
        The initialized bank.
    """
    shape = (count, channels, filter_size, filter_size)
    return ConvBank(
        weights=(rng.standard_normal(shape) * std).astype(dtype),
        biases=np.zeros(count, dtype=dtype),
        stride=stride,
        pool=pool,
        pool_stride=pool_stride,
    )


def conv_forward(input: Tensor, bank: ConvBank) -> Tensor:
    """Dense strided valid convolution.

    Args:
        input: (N, C, H, W) tensor.
        bank: Filters and stride.

    Returns:
        (N, K, H_out, W_out) responses, biases not applied.

    Raises:
        TensorError: If the channel counts disagree.
    """
    count, channels, size, _ = bank.weights.shape
    if input.ndim != 4 or input.shape[1] != channels:
        raise TensorError(
            f"conv: input {input.shape} does not have {channels} channels"
        )
    patches = im2col(input, size, bank.stride, layer="conv")
    scores = matmul(patches, np.ascontiguousarray(bank.weights.reshape(count, -1)).T)
    out_h, out_w = patches.grid
    output = scores.reshape(input.shape[0], out_h, out_w, count).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(output)


def conv_backward(
    grad_out: Tensor, input: Tensor, bank: ConvBank
) -> tuple[Tensor, Tensor]:
    """Adjoint of ``conv_forward``.

    Returns:
        (gradient w.r.t. input, gradient w.r.t. filters).
    """
    count, _, size, _ = bank.weights.shape
    patches = im2col(input, size, bank.stride, layer="conv")
    g = grad_out.transpose(0, 2, 3, 1).reshape(-1, count)
    if g.shape[0] != patches.data.shape[0]:
        raise TensorError(
            f"conv backward: gradient {grad_out.shape} "
            f"does not match input {input.shape}"
        )
    grad_weights = matmul(patches.data.T, g).T.reshape(bank.weights.shape)
    grad_input = np.zeros_like(input)
    col2im_accumulate(
        matmul(g, bank.weights.reshape(count, -1)), grad_input, size, bank.stride
    )
    return grad_input, np.ascontiguousarray(grad_weights)


def conv_pool_forward(
    input: Tensor, bank: ConvBank
) -> tuple[Tensor, Tensor, ArgmaxMap | None]:
    """Convolve, then take the max response over ``D × D`` windows of positions.

    Returns:
        (pooled responses, unpooled responses, argmax map). With D = 1 the
        pooled and unpooled responses are the same array and the map is None.
    """
    responses = conv_forward(input, bank)
    if bank.pool == 1:
        return responses, responses, None
    pooled, argmax = maxpool_forward(responses, bank.pool, bank.pool_stride)
    return pooled, responses, argmax


def conv_pool_backward(
    grad_out: Tensor,
    input: Tensor,
    bank: ConvBank,
    response_shape: tuple[int, ...],
    argmax: ArgmaxMap | None,
) -> tuple[Tensor, Tensor]:
    """Adjoint of ``conv_pool_forward``.

    Returns:
        (gradient w.r.t. input, gradient w.r.t. filters).
    """
    if argmax is not None:
        grad_out = maxpool_backward(
            grad_out, response_shape, argmax, bank.pool, bank.pool_stride
        )
    return conv_backward(grad_out, input, bank)


def conv_pool_margin(input: Tensor, bank: ConvBank) -> float:
    """Smallest winner/runner-up gap of the pooling windows."""
    if bank.pool == 1:
        return float("inf")
    return maxpool_margin(conv_forward(input, bank), bank.pool, bank.pool_stride)
