"""Elementwise and across-channel activations: bias+ReLU, LRN, dropout."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from epinet.config import (
    DEFAULT_DROPOUT,
    DEFAULT_LRN_ALPHA,
    DEFAULT_LRN_BETA,
    DEFAULT_LRN_K,
    DEFAULT_LRN_N,
)
from epinet.tensor import TensorError
from epinet.utils.types import Mode, Tensor


def _channel_bias(input: Tensor, biases: Tensor) -> Tensor:
    if input.ndim != 4 or biases.shape != (input.shape[1],):
        raise TensorError(
            f"bias: {biases.shape} biases do not match input channels {input.shape}"
        )
    return input + biases.reshape(1, -1, 1, 1)


def bias_relu_forward(input: Tensor, biases: Tensor) -> Tensor:
    """Add per-channel biases, then clamp at zero."""
    return np.maximum(_channel_bias(input, biases), 0)


def bias_relu_backward(
    grad_out: Tensor, input: Tensor, biases: Tensor
) -> tuple[Tensor, Tensor]:
    """Mask by positive pre-activation and reduce bias gradients over sites.

    Returns:
        (gradient w.r.t. input, gradient w.r.t. biases).
    """
    grad_input = np.where(_channel_bias(input, biases) > 0, grad_out, 0).astype(
        grad_out.dtype
    )
    return grad_input, grad_input.sum(axis=(0, 2, 3))


def relu_margin(input: Tensor, biases: Tensor) -> float:
    """Smallest distance of a pre-activation from the ReLU kink."""
    pre = _channel_bias(input, biases)
    return float(np.min(np.abs(pre))) if pre.size else float("inf")


@dataclass(frozen=True)
class LrnParams:
    """Across-channel local response normalization constants.

    Attributes:
        n: Neighborhood size (odd).
        alpha: Scale α.
        beta: Exponent β.
        k: Bias κ.
    """

    n: int = DEFAULT_LRN_N
    alpha: float = DEFAULT_LRN_ALPHA
    beta: float = DEFAULT_LRN_BETA
    k: float = DEFAULT_LRN_K

    def __post_init__(self) -> None:
        """Validate the constants.

        Raises:
            TensorError: If a constant is out of range.
        """
        if self.n < 1 or self.n % 2 == 0:
            raise TensorError(
                f"lrn neighborhood must be odd and positive, got {self.n}"
            )
        if self.alpha < 0 or self.k <= 0:
            raise TensorError(
                f"lrn needs alpha >= 0 and k > 0, got {self.alpha}, {self.k}"
            )


def _window_sum(values: Tensor, n: int) -> Tensor:
    """Sum over the ``n`` channels centered on each channel, zero padded."""
    half = n // 2
    padded = np.pad(values, ((0, 0), (half, half), (0, 0), (0, 0)))
    channels = values.shape[1]
    total = np.zeros_like(values)
    for offset in range(n):
        total += padded[:, offset : offset + channels]
    return total


def _lrn_scale(input: Tensor, params: LrnParams) -> Tensor:
    return params.k + (params.alpha / params.n) * _window_sum(input * input, params.n)


def lrn_forward(input: Tensor, params: LrnParams) -> Tensor:
    """Compute ``in / (κ + α/n · Σ in²)^β`` over channel neighborhoods."""
    return input * _lrn_scale(input, params) ** -params.beta


def lrn_backward(grad_out: Tensor, input: Tensor, params: LrnParams) -> Tensor:
    """Exact gradient of ``lrn_forward`` with respect to its input."""
    scale = _lrn_scale(input, params)
    direct = grad_out * scale**-params.beta
    coupled = _window_sum(grad_out * input * scale ** (-params.beta - 1), params.n)
    return direct - (2 * params.alpha * params.beta / params.n) * input * coupled


@dataclass
class DropoutState:
    """Inverted-dropout configuration and the mask of the last forward call.

    Attributes:
        rate: Drop probability in [0, 1).
        mode: ``train`` samples a mask; ``eval`` is the identity.
        mask: Scaled keep mask of the last training forward call.
    """

    rate: float = DEFAULT_DROPOUT
    mode: Mode = "train"
    mask: Tensor | None = None

    def __post_init__(self) -> None:
        """Validate the rate.

        Raises:
            TensorError: If the rate is outside [0, 1).
        """
        if not 0 <= self.rate < 1:
            raise TensorError(f"dropout rate must be in [0, 1), got {self.rate}")


def dropout_forward(
    input: Tensor, state: DropoutState, rng: np.random.Generator | None
) -> Tensor:
    """Zero units with probability ``rate`` and scale survivors by 1/(1 − rate).

    Args:
        input: Any tensor.
        state: Dropout state; its mask is replaced in train mode.
        rng: Generator for the mask; required in train mode with rate > 0.

    Returns:
        The dropped-out tensor (the input itself in eval mode).

    Raises:
        TensorError: If a mask is needed and no generator is given.
    """
    if state.mode == "eval" or state.rate == 0:
        state.mask = None
        return input
    if rng is None:
        raise TensorError("dropout: a random generator is required in train mode")
    keep = rng.random(input.shape) >= state.rate
    state.mask = (keep / (1 - state.rate)).astype(input.dtype)
    return input * state.mask


def dropout_backward(grad_out: Tensor, state: DropoutState) -> Tensor:
    """Apply the mask of the last forward call."""
    if state.mask is None:
        return grad_out
    return grad_out * state.mask
