"""Assemble a config into a layer stack and run it."""

from __future__ import annotations

import copy
from collections.abc import Mapping

import numpy as np

from epinet.layers.conv import init_conv_bank
from epinet.layers.dense import init_fc, softmax_loss
from epinet.layers.epitomic import init_epitome_bank
from epinet.layers.topographic import init_topographic_bank
from epinet.net.config import LayerSpec, NetworkConfig
from epinet.net.stack import (
    ConvLayer,
    DropoutLayer,
    EpitomicLayer,
    FcLayer,
    Layer,
    LrnLayer,
    MaxPoolLayer,
    NetworkError,
    ParamLayer,
    ReluLayer,
    SoftmaxLayer,
    TopographicLayer,
)
from epinet.optim import ParamGroup
from epinet.tensor import TensorError
from epinet.utils.types import Mode, Tensor


def seed_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Split a seed into (initialization, training) generators."""
    init_seq, train_seq = np.random.SeedSequence(seed).spawn(2)
    return (
        np.random.Generator(np.random.PCG64(init_seq)),
        np.random.Generator(np.random.PCG64(train_seq)),
    )


def _make_layer(
    spec: LayerSpec, rng: np.random.Generator, dtype: type
) -> Layer:
    """Instantiate one layer with freshly initialized parameters."""
    channels = spec.in_shape[0]
    if spec.type == "epitomic":
        assert spec.epitomes and spec.epitome and spec.filter
        bank = init_epitome_bank(
            rng,
            spec.epitomes,
            channels,
            spec.epitome,
            spec.filter,
            epitome_stride=spec.epitome_stride,
            normalize=spec.normalize,
            lam=spec.lam,
            dtype=dtype,
        )
        return EpitomicLayer(spec.name, bank, spec.stride)
    if spec.type == "topographic":
        assert spec.epitomes and spec.epitome and spec.filter and spec.pool
        topo = init_topographic_bank(
            rng,
            spec.epitomes,
            channels,
            spec.epitome,
            spec.filter,
            spec.pool,
            epitome_stride=spec.epitome_stride,
            normalize=spec.normalize,
            lam=spec.lam,
            dtype=dtype,
        )
        return TopographicLayer(spec.name, topo, spec.stride)
    if spec.type == "conv":
        assert spec.channels and spec.filter
        conv = init_conv_bank(
            rng,
            spec.channels,
            channels,
            spec.filter,
            stride=spec.stride,
            pool=spec.pool or 1,
            pool_stride=spec.pool_stride,
            dtype=dtype,
        )
        return ConvLayer(spec.name, conv)
    if spec.type == "maxpool":
        assert spec.pool is not None
        return MaxPoolLayer(spec.name, spec.pool, spec.pool_stride)
    if spec.type == "relu":
        return ReluLayer(spec.name)
    if spec.type == "lrn":
        return LrnLayer(spec.name, spec.lrn)
    if spec.type == "dropout":
        return DropoutLayer(spec.name, spec.dropout)
    if spec.type == "fc":
        assert spec.channels is not None
        inputs = int(np.prod(spec.in_shape))
        weights, biases = init_fc(rng, inputs, spec.channels, dtype=dtype)
        return FcLayer(spec.name, weights, biases)
    if spec.type == "softmax":
        assert spec.classes is not None
        return SoftmaxLayer(spec.name, spec.classes)
    raise NetworkError(f"{spec.label}: no builder for layer type '{spec.type}'")


class Network:
    """A linear stack of layers ending in softmax log-loss."""

    def __init__(self, config: NetworkConfig, layers: list[Layer], dtype: type) -> None:
        """Initialize the network.

        Args:
            config: The config the layers were built from.
            layers: Layers in forward order.
            dtype: Floating dtype of activations and parameters.
        """
        self.config = config
        self.layers = layers
        self.dtype = np.dtype(dtype)
        self._grad_logits: Tensor | None = None

    def named_params(self) -> dict[str, Tensor]:
        """Return every parameter as ``<layer>.<key>`` in network order."""
        return {
            f"{layer.name}.{key}": value
            for layer in self.layers
            for key, value in layer.params().items()
        }

    def param_groups(self) -> list[ParamGroup]:
        """Return optimizer groups with weight-decay flags set per parameter."""
        return [
            ParamGroup(
                name=f"{layer.name}.{key}",
                param=value,
                decay_enabled=layer.decays(key),
            )
            for layer in self.layers
            for key, value in layer.params().items()
        ]

    def load_params(self, params: Mapping[str, Tensor]) -> None:
        """Copy stored parameters into the network in place.

        Raises:
            NetworkError: If a parameter is missing or misshapen.
        """
        for name, value in self.named_params().items():
            if name not in params:
                raise NetworkError(f"missing stored parameter '{name}'")
            if params[name].shape != value.shape:
                raise NetworkError(
                    f"parameter '{name}': stored shape {params[name].shape} does not "
                    f"match {value.shape}"
                )
            value[...] = params[name]

    def forward(
        self,
        batch: Tensor,
        labels: np.ndarray | None = None,
        mode: Mode = "train",
        rng: np.random.Generator | None = None,
    ) -> tuple[float | None, Tensor]:
        """Run every layer in order.

        Args:
            batch: (N, C, H, W) inputs matching the config's input shape.
            labels: Class indices; when given, the loss and its gradient are
                computed and ``backward`` becomes available.
            mode: ``train`` enables dropout.
            rng: Generator for dropout masks.

        Returns:
            (mean log-loss or None, (N, classes) logits).

        Raises:
            NetworkError: If the batch shape does not match the config.
        """
        if batch.ndim != 4 or tuple(batch.shape[1:]) != self.config.input_shape:
            raise NetworkError(
                f"batch {batch.shape} does not match network input "
                f"{self.config.input_shape}"
            )
        x = batch.astype(self.dtype, copy=False)
        for layer in self.layers:
            x = layer.forward(x, mode, rng)
        logits = x.reshape(x.shape[0], -1)
        self._grad_logits = None
        if labels is None:
            return None, logits
        try:
            loss, grad = softmax_loss(logits, labels)
        except TensorError as e:
            raise NetworkError(str(e)) from e
        self._grad_logits = grad.reshape(x.shape)
        return loss, logits

    def backward(self) -> dict[str, Tensor]:
        """Backpropagate the loss of the preceding labelled forward call.

        Returns:
            Gradients keyed like ``named_params``.

        Raises:
            NetworkError: If there is no labelled forward pass to consume.
        """
        if self._grad_logits is None:
            raise NetworkError("backward called without a labelled forward pass")
        grad = self._grad_logits
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        grads = {
            f"{layer.name}.{key}": value
            for layer in self.layers
            for key, value in layer.grads().items()
        }
        self.clear()
        return grads

    def predict(self, batch: Tensor) -> np.ndarray:
        """Return eval-mode class predictions."""
        _, logits = self.forward(batch, mode="eval")
        self.clear()
        return logits.argmax(axis=1)

    def margin(self) -> float:
        """Smallest routing margin over the layers of the cached forward pass."""
        return min((layer.margin() for layer in self.layers), default=float("inf"))

    def routing(self) -> bytes:
        """Concatenated routing signatures of the cached forward pass."""
        return b"".join(layer.routing() for layer in self.layers)

    def clear(self) -> None:
        """Drop all cached forward state."""
        self._grad_logits = None
        for layer in self.layers:
            layer.clear()

    def clone(self) -> Network:
        """Deep copy, for independent (e.g. concurrent inference) use."""
        self.clear()
        return copy.deepcopy(self)


def build_network(
    config: NetworkConfig,
    *,
    dtype: type = np.float32,
    rng: np.random.Generator | None = None,
) -> Network:
    """Instantiate a config with freshly initialized parameters.

    ReLU layers take their biases from the nearest preceding epitomic,
    topographic or conv layer; a ReLU after ``fc`` is bias-free.

    Args:
        config: Validated config.
        dtype: Parameter and activation dtype.
        rng: Initialization generator; derived from ``config.seed`` when None.

    Returns:
        The network.
    """
    if rng is None:
        rng, _ = seed_streams(config.seed)
    layers = [_make_layer(spec, rng, dtype) for spec in config.layers]
    return Network(config, _bind_relus(layers), dtype)


def _bind_relus(layers: list[Layer]) -> list[Layer]:
    """Replace each ReLU with one bound to its bias owner."""
    bound: list[Layer] = []
    owner: ParamLayer | None = None
    for layer in layers:
        if isinstance(layer, (EpitomicLayer, ConvLayer)):
            owner = layer
        elif isinstance(layer, FcLayer):
            owner = None
        elif isinstance(layer, ReluLayer):
            layer = ReluLayer(layer.name, owner)
            owner = None
        bound.append(layer)
    return bound
