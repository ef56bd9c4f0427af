"""Fully-connected layer and softmax log-loss."""

from __future__ import annotations

import numpy as np

from epinet.config import DEFAULT_INIT_STD
from epinet.tensor import TensorError, matmul
from epinet.utils.types import Tensor


def init_fc(
    rng: np.random.Generator,
    inputs: int,
    outputs: int,
    *,
    std: float = DEFAULT_INIT_STD,
    dtype: type = np.float32,
) -> tuple[Tensor, Tensor]:
    """Gaussian (inputs, outputs) weights and zero biases."""
    weights = (rng.standard_normal((inputs, outputs)) * std).astype(dtype)
    return weights, np.zeros(outputs, dtype=dtype)


def fc_forward(input: Tensor, weights: Tensor, biases: Tensor) -> Tensor:
    """Flatten each example and apply the affine map.

    Returns:
        (N, outputs, 1, 1) tensor.
    """
    flat = input.reshape(input.shape[0], -1)
    if flat.shape[1] != weights.shape[0]:
        raise TensorError(
            f"fc: input of {flat.shape[1]} features does not match weights "
            f"{weights.shape}"
        )
    out = matmul(flat, weights) + biases
    return out.reshape(out.shape[0], out.shape[1], 1, 1)


def fc_backward(
    grad_out: Tensor, input: Tensor, weights: Tensor
) -> tuple[Tensor, Tensor, Tensor]:
    """Adjoint of ``fc_forward``.

    Returns:
        (gradient w.r.t. input, w.r.t. weights, w.r.t. biases).
    """
    flat = input.reshape(input.shape[0], -1)
    g = grad_out.reshape(grad_out.shape[0], -1)
    grad_input = matmul(g, weights.T).reshape(input.shape)
    return grad_input, matmul(flat.T, g), g.sum(axis=0)


def softmax(logits: Tensor) -> Tensor:
    """Row-wise softmax of (N, K) logits with max subtraction."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def softmax_loss(logits: Tensor, labels: np.ndarray) -> tuple[float, Tensor]:
    """Mean negative log-likelihood of the labels under softmax(logits).

    Args:
        logits: (N, K) or (N, K, 1, 1) scores.
        labels: N class indices.

    Returns:
        (loss, gradient w.r.t. logits in the logits' shape).

    Raises:
        TensorError: If a label is out of range or the batch sizes differ.
    """
    flat = logits.reshape(logits.shape[0], -1)
    n, classes = flat.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise TensorError(f"softmax: {labels.shape} labels for a batch of {n}")
    if n and (labels.min() < 0 or labels.max() >= classes):
        raise TensorError(f"softmax: labels must lie in [0, {classes})")
    shifted = flat - flat.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(log_norm - shifted[rows, labels]))
    grad = softmax(flat)
    grad[rows, labels] -= 1
    grad /= n
    return loss, grad.reshape(logits.shape)
