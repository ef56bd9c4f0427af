"""Layer objects: functional ops plus the state cached between passes.

Each layer keeps what its backward pass needs (input, argmax map, mask) from
the most recent forward call only, and drops it once backward has run.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from epinet.layers.activations import (
    DropoutState,
    LrnParams,
    bias_relu_backward,
    bias_relu_forward,
    dropout_backward,
    dropout_forward,
    lrn_backward,
    lrn_forward,
    relu_margin,
)
from epinet.layers.conv import (
    ConvBank,
    conv_pool_backward,
    conv_pool_forward,
    conv_pool_margin,
)
from epinet.layers.dense import fc_backward, fc_forward
from epinet.layers.epitomic import (
    ArgmaxMap,
    EpitomeBank,
    epitomic_backward,
    epitomic_forward,
    epitomic_margin,
)
from epinet.layers.pooling import maxpool_backward, maxpool_forward, maxpool_margin
from epinet.layers.topographic import (
    TopographicBank,
    topographic_backward,
    topographic_forward,
    topographic_margin,
)
from epinet.tensor import EpinetError, check_finite
from epinet.utils.types import Mode, Tensor


class NetworkError(EpinetError):
    """Raised for misuse of a network or layer (e.g. backward without forward)."""


class Layer(ABC):
    """A stage of a linear network."""

    def __init__(self, name: str) -> None:
        """Initialize the layer.

        Args:
            name: Unique layer name from the config.
        """
        self.name = name
        self._input: Tensor | None = None

    @abstractmethod
    def forward(self, x: Tensor, mode: Mode, rng: np.random.Generator | None) -> Tensor:
        """Apply the layer and cache what backward needs."""

    @abstractmethod
    def backward(self, grad: Tensor) -> Tensor:
        """Return the input gradient and accumulate parameter gradients."""

    def params(self) -> dict[str, Tensor]:
        """Return the trainable arrays by short name."""
        return {}

    def grads(self) -> dict[str, Tensor]:
        """Return the gradients from the last backward pass by short name."""
        return {}

    def decays(self, key: str) -> bool:
        """Return whether weight decay applies to parameter ``key``."""
        return key == "weights"

    def margin(self) -> float:
        """Return the distance of the last forward pass from a routing kink."""
        return float("inf")

    def routing(self) -> bytes:
        """Return a signature of the routing decisions of the last forward pass."""
        return b""

    def clear(self) -> None:
        """Drop cached forward state."""
        self._input = None

    def _cached_input(self) -> Tensor:
        if self._input is None:
            raise NetworkError(f"layer '{self.name}': backward called without forward")
        return self._input


class ParamLayer(Layer):
    """Layer with named parameters and matching gradient buffers."""

    def __init__(self, name: str) -> None:
        """Initialize the gradient buffers."""
        super().__init__(name)
        self._grads: dict[str, Tensor] = {}

    def reset_grads(self) -> None:
        """Zero every gradient buffer."""
        self._grads = {
            key: np.zeros_like(value) for key, value in self.params().items()
        }

    def accumulate(self, key: str, grad: Tensor) -> None:
        """Add ``grad`` into the buffer of parameter ``key``."""
        if key not in self._grads:
            self._grads[key] = np.zeros_like(self.params()[key])
        self._grads[key] += grad

    def grads(self) -> dict[str, Tensor]:
        """Return the gradients accumulated since the last forward pass."""
        return dict(self._grads)


class EpitomicLayer(ParamLayer):
    """Mini-epitome layer; biases belong to the following ReLU."""

    def __init__(self, name: str, bank: EpitomeBank, stride: int) -> None:
        """Initialize the layer.

        Args:
            name: Layer name.
            bank: Epitome bank.
            stride: Input stride.
        """
        super().__init__(name)
        self.bank = bank
        self.stride = stride
        self._argmax: ArgmaxMap | None = None

    def params(self) -> dict[str, Tensor]:
        """Return the epitomes and biases."""
        return {"weights": self.bank.weights, "biases": self.bank.biases}

    def decays(self, key: str) -> bool:
        """Normalized epitomes are scale-free and must not decay."""
        return key == "weights" and not self.bank.normalize

    def forward(self, x: Tensor, mode: Mode, rng: np.random.Generator | None) -> Tensor:
        """Epitomic matching."""
        self.reset_grads()
        self._input = x
        out, self._argmax = epitomic_forward(x, self.bank, self.stride)
        return out

    def backward(self, grad: Tensor) -> Tensor:
        """Route the gradient through the recorded displacements."""
        x = self._cached_input()
        assert self._argmax is not None
        grad_input, grad_weights = epitomic_backward(
            grad, x, self.bank, self._argmax, self.stride
        )
        self.accumulate("weights", grad_weights)
        return grad_input

    def margin(self) -> float:
        """Winner/runner-up gap of the cached forward pass."""
        return epitomic_margin(self._cached_input(), self.bank, self.stride)

    def routing(self) -> bytes:
        """Return the argmax offsets."""
        return b"" if self._argmax is None else self._argmax.offsets.tobytes()

    def clear(self) -> None:
        """Drop the cached input and argmax map."""
        super().clear()
        self._argmax = None


class TopographicLayer(EpitomicLayer):
    """Topographic epitome layer."""

    bank: TopographicBank

    def forward(self, x: Tensor, mode: Mode, rng: np.random.Generator | None) -> Tensor:
        """Block-pooled epitomic matching."""
        self.reset_grads()
        self._input = x
        out, self._argmax = topographic_forward(x, self.bank, self.stride)
        return out

    def backward(self, grad: Tensor) -> Tensor:
        """Route the gradient through every block's winner."""
        x = self._cached_input()
        assert self._argmax is not None
        grad_input, grad_weights = topographic_backward(
            grad, x, self.bank, self._argmax, self.stride
        )
        self.accumulate("weights", grad_weights)
        return grad_input

    def margin(self) -> float:
        """Winner/runner-up gap of the cached forward pass."""
        return topographic_margin(self._cached_input(), self.bank, self.stride)


class ConvLayer(ParamLayer):
    """Strided convolution with the bank's pooling; biases belong to the next ReLU."""

    def __init__(self, name: str, bank: ConvBank) -> None:
        """Initialize the layer.

        Args:
            name: Layer name.
            bank: Filters, stride and pooling.
        """
        super().__init__(name)
        self.bank = bank
        self._argmax: ArgmaxMap | None = None
        self._response_shape: tuple[int, ...] = ()

    def params(self) -> dict[str, Tensor]:
        """Return the filters and biases."""
        return {"weights": self.bank.weights, "biases": self.bank.biases}

    def forward(self, x: Tensor, mode: Mode, rng: np.random.Generator | None) -> Tensor:
        """Convolve and pool."""
        self.reset_grads()
        self._input = x
        out, responses, self._argmax = conv_pool_forward(x, self.bank)
        self._response_shape = responses.shape
        return out

    def backward(self, grad: Tensor) -> Tensor:
        """Scatter onto the pooling winners, then take the adjoint convolution."""
        grad_input, grad_weights = conv_pool_backward(
            grad, self._cached_input(), self.bank, self._response_shape, self._argmax
        )
        self.accumulate("weights", grad_weights)
        return grad_input

    def margin(self) -> float:
        """Winner/runner-up gap of the pooling windows."""
        return conv_pool_margin(self._cached_input(), self.bank)

    def routing(self) -> bytes:
        """Return the pooling argmax offsets."""
        return b"" if self._argmax is None else self._argmax.offsets.tobytes()

    def clear(self) -> None:
        """Drop the cached input and argmax map."""
        super().clear()
        self._argmax = None


class MaxPoolLayer(Layer):
    """Spatial max-pooling."""

    def __init__(self, name: str, pool: int, stride: int) -> None:
        """Initialize the layer.

        Args:
            name: Layer name.
            pool: Window side.
            stride: Window stride.
        """
        super().__init__(name)
        self.pool = pool
        self.stride = stride
        self._argmax: ArgmaxMap | None = None

    def forward(self, x: Tensor, mode: Mode, rng: np.random.Generator | None) -> Tensor:
        """Pool."""
        self._input = x
        out, self._argmax = maxpool_forward(x, self.pool, self.stride)
        return out

    def backward(self, grad: Tensor) -> Tensor:
        """Scatter onto the winners."""
        x = self._cached_input()
        assert self._argmax is not None
        return maxpool_backward(grad, x.shape, self._argmax, self.pool, self.stride)

    def margin(self) -> float:
        """Winner/runner-up gap of the cached forward pass."""
        return maxpool_margin(self._cached_input(), self.pool, self.stride)

    def routing(self) -> bytes:
        """Return the argmax offsets."""
        return b"" if self._argmax is None else self._argmax.offsets.tobytes()

    def clear(self) -> None:
        """Drop the cached input and argmax map."""
        super().clear()
        self._argmax = None


class ReluLayer(Layer):
    """Bias + ReLU, using the biases of the layer it follows."""

    def __init__(self, name: str, source: ParamLayer | None = None) -> None:
        """Initialize the layer.

        Args:
            name: Layer name.
            source: Layer owning the biases; None for a bias-free ReLU.
        """
        super().__init__(name)
        self.source = source

    def _biases(self, channels: int, dtype: np.dtype) -> Tensor:
        if self.source is None:
            return np.zeros(channels, dtype=dtype)
        return self.source.params()["biases"]

    def forward(self, x: Tensor, mode: Mode, rng: np.random.Generator | None) -> Tensor:
        """Add biases and rectify."""
        self._input = x
        return bias_relu_forward(x, self._biases(x.shape[1], x.dtype))

    def backward(self, grad: Tensor) -> Tensor:
        """Mask the gradient and hand the bias gradient to its owner."""
        x = self._cached_input()
        grad_input, grad_biases = bias_relu_backward(
            grad, x, self._biases(x.shape[1], x.dtype)
        )
        if self.source is not None:
            self.source.accumulate("biases", grad_biases)
        return grad_input

    def margin(self) -> float:
        """Smallest |pre-activation| of the cached forward pass."""
        x = self._cached_input()
        return relu_margin(x, self._biases(x.shape[1], x.dtype))

    def routing(self) -> bytes:
        """Return the packed activity mask."""
        if self._input is None:
            return b""
        x = self._input
        pre = x + self._biases(x.shape[1], x.dtype).reshape(1, -1, 1, 1)
        return np.packbits(pre > 0).tobytes()


class LrnLayer(Layer):
    """Across-channel local response normalization."""

    def __init__(self, name: str, params: LrnParams) -> None:
        """Initialize the layer.

        Args:
            name: Layer name.
            params: LRN constants.
        """
        super().__init__(name)
        self.lrn = params

    def forward(self, x: Tensor, mode: Mode, rng: np.random.Generator | None) -> Tensor:
        """Normalize."""
        self._input = x
        return lrn_forward(x, self.lrn)

    def backward(self, grad: Tensor) -> Tensor:
        """Exact LRN gradient."""
        return lrn_backward(grad, self._cached_input(), self.lrn)


class DropoutLayer(Layer):
    """Inverted dropout."""

    def __init__(self, name: str, rate: float) -> None:
        """Initialize the layer.

        Args:
            name: Layer name.
            rate: Drop probability.
        """
        super().__init__(name)
        self.state = DropoutState(rate=rate)

    def forward(self, x: Tensor, mode: Mode, rng: np.random.Generator | None) -> Tensor:
        """Drop units in train mode."""
        self._input = x
        self.state.mode = mode
        return dropout_forward(x, self.state, rng)

    def backward(self, grad: Tensor) -> Tensor:
        """Reuse the forward mask."""
        self._cached_input()
        return dropout_backward(grad, self.state)

    def clear(self) -> None:
        """Drop the cached input and mask."""
        super().clear()
        self.state.mask = None


class FcLayer(ParamLayer):
    """Fully-connected affine layer."""

    def __init__(self, name: str, weights: Tensor, biases: Tensor) -> None:
        """Initialize the layer.

        Args:
            name: Layer name.
            weights: (inputs, outputs) weights.
            biases: (outputs,) biases.
        """
        super().__init__(name)
        self.weights = weights
        self.biases = biases

    def params(self) -> dict[str, Tensor]:
        """Return the weights and biases."""
        return {"weights": self.weights, "biases": self.biases}

    def forward(self, x: Tensor, mode: Mode, rng: np.random.Generator | None) -> Tensor:
        """Affine map."""
        self.reset_grads()
        self._input = x
        return fc_forward(x, self.weights, self.biases)

    def backward(self, grad: Tensor) -> Tensor:
        """Affine adjoint."""
        grad_input, grad_weights, grad_biases = fc_backward(
            grad, self._cached_input(), self.weights
        )
        self.accumulate("weights", grad_weights)
        self.accumulate("biases", grad_biases)
        return grad_input


class SoftmaxLayer(Layer):
    """Terminal layer: passes logits through; the loss lives in the network."""

    def __init__(self, name: str, classes: int) -> None:
        """Initialize the layer.

        Args:
            name: Layer name.
            classes: Class count.
        """
        super().__init__(name)
        self.classes = classes

    def forward(self, x: Tensor, mode: Mode, rng: np.random.Generator | None) -> Tensor:
        """Return the logits unchanged."""
        self._input = x
        return check_finite(x, f"layer '{self.name}' logits")

    def backward(self, grad: Tensor) -> Tensor:
        """Pass the loss gradient through."""
        self._cached_input()
        return grad
