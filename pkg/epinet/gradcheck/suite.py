"""Built-in gradient-check instances for every layer type and small networks."""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass
from typing import Final

import numpy as np

from epinet.config import GRADCHECK_EPSILON, GRADCHECK_TOLERANCE
from epinet.gradcheck.checker import GradCheckReport, check_op, margin_guarded
from epinet.layers.activations import LrnParams
from epinet.layers.conv import init_conv_bank
from epinet.layers.dense import init_fc
from epinet.layers.epitomic import init_epitome_bank
from epinet.layers.topographic import init_topographic_bank
from epinet.net.config import NetworkConfig, parse_config
from epinet.net.network import Network, build_network
from epinet.net.stack import (
    ConvLayer,
    DropoutLayer,
    EpitomicLayer,
    FcLayer,
    Layer,
    LrnLayer,
    MaxPoolLayer,
    ReluLayer,
    TopographicLayer,
)
from epinet.utils.types import Tensor

TWO_LAYER_NET: Final[str] = """\
[net]
input = 1x9x9
classes = 3

[layer e1]
type = epitomic
epitomes = 3
filter = 3
pool = 2

[layer r1]
type = relu

[layer e2]
type = epitomic
epitomes = 4
epitome = 4
filter = 2
stride = 2

[layer r2]
type = relu

[layer fc]
type = fc
channels = 3

[layer out]
type = softmax
"""


@dataclass
class StackCase:
    """A float64 layer stack with a fixed input and a random linear readout.

    The loss is ``Σ stack(input) ⊙ projection``; its gradient with respect to
    the stack output is ``projection``.
    """

    name: str
    layers: list[Layer]
    input: Tensor
    projection: Tensor
    dropout_seed: int = 0

    def loss(self) -> float:
        """Forward the stack and return the projected loss."""
        rng = np.random.default_rng(self.dropout_seed)
        x = self.input
        for layer in self.layers:
            x = layer.forward(x, "train", rng)
        return float(np.sum(x * self.projection))

    def margin(self) -> float:
        """Routing margin of the most recent forward pass."""
        return min((layer.margin() for layer in self.layers), default=float("inf"))

    def routing(self) -> bytes:
        """Routing signature of the most recent forward pass."""
        return b"".join(layer.routing() for layer in self.layers)

    def params(self) -> dict[str, Tensor]:
        """Input and every layer parameter."""
        blocks = {"input": self.input}
        for layer in self.layers:
            blocks.update({f"{layer.name}.{k}": v for k, v in layer.params().items()})
        return blocks

    def analytic(self) -> dict[str, Tensor]:
        """Backpropagated gradients keyed like ``params``."""
        self.loss()
        grad = self.projection
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        grads = {"input": grad}
        for layer in self.layers:
            grads.update({f"{layer.name}.{k}": v for k, v in layer.grads().items()})
        return grads


def _normal(rng: np.random.Generator, *shape: int) -> Tensor:
    return rng.standard_normal(shape)


def _case(
    name: str, layers: list[Layer], shape: tuple[int, ...], rng: np.random.Generator
) -> StackCase:
    case = StackCase(
        name=name,
        layers=layers,
        input=_normal(rng, *shape),
        projection=np.zeros(0),
        dropout_seed=int(rng.integers(0, 2**31)),
    )
    rng_out = np.random.default_rng(case.dropout_seed)
    x = case.input
    for layer in layers:
        x = layer.forward(x, "train", rng_out)
    case.projection = _normal(rng, *x.shape)
    for layer in layers:
        layer.clear()
    return case


def _bias(layer: ConvLayer | EpitomicLayer, rng: np.random.Generator) -> None:
    biases = layer.params()["biases"]
    biases[...] = 0.1 * rng.standard_normal(biases.shape)


def _epitomic(
    rng: np.random.Generator,
    *,
    normalize: bool = False,
    epitome: int = 5,
    epitome_stride: int = 1,
    stride: int = 1,
    side: int = 6,
    name: str = "epitomic",
) -> StackCase:
    bank = init_epitome_bank(
        rng, 2, 2, epitome, 3,
        epitome_stride=epitome_stride, normalize=normalize, std=1.0, dtype=np.float64,
    )
    layer = EpitomicLayer("e", bank, stride)
    _bias(layer, rng)
    return _case(name, [layer, ReluLayer("r", layer)], (2, 2, side, side), rng)


def _topographic(rng: np.random.Generator) -> StackCase:
    bank = init_topographic_bank(rng, 2, 2, 6, 3, 2, std=1.0, dtype=np.float64)
    layer = TopographicLayer("t", bank, 1)
    _bias(layer, rng)
    return _case("topographic", [layer, ReluLayer("r", layer)], (2, 2, 5, 5), rng)


def _conv(rng: np.random.Generator, pool: int = 1, name: str = "conv") -> StackCase:
    stride, side = (2, 7) if pool == 1 else (1, 9)
    bank = init_conv_bank(
        rng, 3, 2, 3, stride=stride, pool=pool, std=1.0, dtype=np.float64
    )
    layer = ConvLayer("c", bank)
    _bias(layer, rng)
    return _case(name, [layer, ReluLayer("r", layer)], (2, 2, side, side), rng)


def _fc(rng: np.random.Generator) -> StackCase:
    weights, biases = init_fc(rng, 12, 4, std=1.0, dtype=np.float64)
    biases[...] = rng.standard_normal(4)
    return _case("fc", [FcLayer("fc", weights, biases)], (2, 3, 2, 2), rng)


SUITE: Final[dict[str, Callable[[np.random.Generator], StackCase]]] = {
    "fc": _fc,
    "conv": _conv,
    "conv-pooled": lambda rng: _conv(rng, pool=3, name="conv-pooled"),
    "maxpool": lambda rng: _case(
        "maxpool", [MaxPoolLayer("p", 3, 2)], (2, 2, 7, 7), rng
    ),
    "lrn": lambda rng: _case(
        "lrn",
        [LrnLayer("n", LrnParams(n=3, alpha=0.5, beta=0.75, k=2.0))],
        (2, 5, 3, 3),
        rng,
    ),
    "dropout": lambda rng: _case(
        "dropout", [DropoutLayer("d", 0.5)], (2, 3, 4, 4), rng
    ),
    "epitomic": _epitomic,
    "epitomic-normalized": lambda rng: _epitomic(
        rng, normalize=True, name="epitomic-normalized"
    ),
    "epitomic-strided": lambda rng: _epitomic(
        rng, epitome=7, epitome_stride=2, stride=2, side=7, name="epitomic-strided"
    ),
    "topographic": _topographic,
}


def _guarded_margin(case: StackCase) -> float:
    case.loss()
    margin = case.margin()
    for layer in case.layers:
        layer.clear()
    return margin


def check_case(
    case: StackCase,
    *,
    epsilon: float = GRADCHECK_EPSILON,
    tolerance: float = GRADCHECK_TOLERANCE,
    margin: float = float("inf"),
) -> GradCheckReport:
    """Check every block of a stack case."""
    analytic = case.analytic()
    return check_op(
        case.loss,
        case.params(),
        analytic,
        name=case.name,
        epsilon=epsilon,
        tolerance=tolerance,
        routing=case.routing,
        margin=margin,
    )


def randomize_params(net: Network, rng: np.random.Generator) -> None:
    """Redraw weights with fan-in scaling and biases small, for checking."""
    for name, value in net.named_params().items():
        if name.endswith(".biases"):
            value[...] = 0.1 * rng.standard_normal(value.shape)
        else:
            fan_in = (
                int(np.prod(value.shape[1:])) if value.ndim == 4 else value.shape[0]
            )
            fan_in = max(1, fan_in)
            value[...] = rng.standard_normal(value.shape) / np.sqrt(fan_in)


def check_network(
    net: Network,
    batch: Tensor,
    labels: np.ndarray,
    *,
    name: str = "network",
    epsilon: float = GRADCHECK_EPSILON,
    tolerance: float = GRADCHECK_TOLERANCE,
    max_elements: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Check every parameter block of a float64 network under softmax loss."""

    def loss() -> float:
        value, _ = net.forward(batch, labels, mode="eval")
        assert value is not None
        return value

    loss()
    margin = net.margin()
    analytic = net.backward()
    return check_op(
        loss,
        net.named_params(),
        analytic,
        name=name,
        epsilon=epsilon,
        tolerance=tolerance,
        routing=net.routing,
        margin=margin,
        max_elements=max_elements,
        rng=rng,
    )


def check_config(
    config: NetworkConfig,
    rng: np.random.Generator,
    *,
    batch_size: int = 1,
    max_elements: int | None = None,
    epsilon: float = GRADCHECK_EPSILON,
    tolerance: float = GRADCHECK_TOLERANCE,
    name: str | None = None,
) -> GradCheckReport:
    """Check a network built from ``config`` on a random float64 instance.

    Large networks cannot satisfy the margin guard, so kinks are handled by
    routing exclusion alone; ``max_elements`` bounds the cost per block.
    """
    net = build_network(config, dtype=np.float64, rng=rng)
    randomize_params(net, rng)
    batch = rng.standard_normal((batch_size, *config.input_shape))
    labels = rng.integers(0, config.classes, size=batch_size)
    return check_network(
        net,
        batch,
        labels,
        name=name or "network",
        epsilon=epsilon,
        tolerance=tolerance,
        max_elements=max_elements,
        rng=rng,
    )


def _network_case(rng: np.random.Generator) -> GradCheckReport:
    config = parse_config(TWO_LAYER_NET)

    def sample(inner: np.random.Generator) -> tuple[Network, Tensor, np.ndarray]:
        net = build_network(config, dtype=np.float64, rng=inner)
        randomize_params(net, inner)
        batch = inner.standard_normal((2, *config.input_shape))
        return net, batch, inner.integers(0, config.classes, size=2)

    def margin(instance: tuple[Network, Tensor, np.ndarray]) -> float:
        net, batch, labels = instance
        net.forward(batch, labels, mode="eval")
        value = net.margin()
        net.clear()
        return value

    (net, batch, labels), _ = margin_guarded(sample, margin, rng)
    return check_network(net, batch, labels, name="two-epitomic-network")


def layer_suite(
    seed: int = 0,
    instances: int = 1,
    *,
    epsilon: float = GRADCHECK_EPSILON,
    tolerance: float = GRADCHECK_TOLERANCE,
) -> list[GradCheckReport]:
    """Check every layer type plus a two-epitomic-layer network.

    Every instance is drawn by the margin guard.

    Args:
        seed: Seed for all instances.
        instances: Random instances per case.
        epsilon: Perturbation size.
        tolerance: Relative-error threshold.

    Returns:
        One report per case and instance.
    """
    rng = np.random.default_rng(seed)
    reports = []
    for index in range(instances):
        suffix = f"#{index}" if instances > 1 else ""
        for name, build in SUITE.items():
            case, margin = margin_guarded(build, _guarded_margin, rng, epsilon=epsilon)
            report = check_case(
                case, epsilon=epsilon, tolerance=tolerance, margin=margin
            )
            report.name = f"{name}{suffix}"
            reports.append(report)
        network = _network_case(rng)
        network.name = f"{network.name}{suffix}"
        reports.append(network)
    return reports
