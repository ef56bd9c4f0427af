"""Network configuration parsing and shape inference.

Configs are flat sectioned text::

    [net]
    input = 1x28x28
    classes = 10

    [layer e1]
    type = epitomic
    epitomes = 32
    filter = 7
    pool = 3        # mini-epitome: epitome side = filter + pool - 1

Every layer is shape-checked against its predecessor when the config is
parsed, so a config that parses also builds.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Any, Final, cast

from epinet.config import (
    DEFAULT_DROPOUT,
    DEFAULT_LAMBDA,
    DEFAULT_POOL_STRIDE,
    DEFAULT_SEED,
    MAX_EPITOME_OFFSET,
)
from epinet.layers.activations import LrnParams
from epinet.layers.epitomic import candidate_count, pooled_count
from epinet.tensor import EpinetError, TensorError, output_side
from epinet.utils.types import ChwShape, LayerType


class ConfigError(EpinetError):
    """Raised for malformed or inconsistent network configs."""


LAYER_KEYS: Final[dict[str, frozenset[str]]] = {
    "epitomic": frozenset(
        {"epitomes", "epitome", "filter", "stride", "epitome_stride", "pool"}
        | {"normalize", "lambda"}
    ),
    "topographic": frozenset(
        {"epitomes", "epitome", "filter", "stride", "epitome_stride", "pool"}
        | {"normalize", "lambda"}
    ),
    "conv": frozenset({"channels", "filter", "stride", "pool", "pool_stride"}),
    "maxpool": frozenset({"pool", "pool_stride"}),
    "relu": frozenset(),
    "lrn": frozenset({"lrn_n", "lrn_alpha", "lrn_beta", "lrn_k"}),
    "dropout": frozenset({"dropout"}),
    "fc": frozenset({"channels"}),
    "softmax": frozenset({"classes"}),
}
REQUIRED_KEYS: Final[dict[str, tuple[str, ...]]] = {
    "epitomic": ("epitomes", "filter"),
    "topographic": ("epitomes", "epitome", "filter", "pool"),
    "conv": ("channels", "filter"),
    "maxpool": ("pool",),
    "fc": ("channels",),
}
NET_KEYS: Final[frozenset[str]] = frozenset({"input", "classes", "seed"})
INT_KEYS: Final[frozenset[str]] = frozenset(
    {"channels", "epitomes", "epitome", "filter", "stride", "epitome_stride"}
    | {"pool", "pool_stride", "lrn_n", "classes", "seed"}
)
FLOAT_KEYS: Final[frozenset[str]] = frozenset(
    {"lambda", "dropout", "lrn_alpha", "lrn_beta", "lrn_k"}
)

_SECTION = re.compile(r"^\[\s*(net|layer\s+([A-Za-z0-9_.-]+))\s*\]$")
_ASSIGN = re.compile(r"^([A-Za-z_]+)\s*=\s*(.+)$")


@dataclass(frozen=True)
class LayerSpec:
    """One ``[layer <name>]`` section with its inferred shapes.

    Attributes:
        name: Section name.
        type: Layer type.
        line: Line of the section header.
        channels: Output channels of conv/fc layers.
        epitomes: Epitome count K.
        epitome: Epitome side V.
        filter: Filter side W.
        stride: Input stride.
        epitome_stride: Candidate displacement step.
        pool: Max-pool window, mini-epitome pooling extent or epitome pool.
        pool_stride: Max-pool stride.
        normalize: Mean+contrast normalization flag.
        lam: Contrast regularizer λ.
        dropout: Dropout rate.
        lrn: LRN constants.
        classes: Class count of a softmax layer.
        in_shape: Inferred (C, H, W) input shape.
        out_shape: Inferred (C, H, W) output shape.
    """

    name: str
    type: LayerType
    line: int = 0
    channels: int | None = None
    epitomes: int | None = None
    epitome: int | None = None
    filter: int | None = None
    stride: int = 1
    epitome_stride: int = 1
    pool: int | None = None
    pool_stride: int = DEFAULT_POOL_STRIDE
    normalize: bool = False
    lam: float = DEFAULT_LAMBDA
    dropout: float = DEFAULT_DROPOUT
    lrn: LrnParams = field(default_factory=LrnParams)
    classes: int | None = None
    in_shape: ChwShape = (0, 0, 0)
    out_shape: ChwShape = (0, 0, 0)

    @property
    def label(self) -> str:
        """Return ``[layer name] (line N)`` for error messages."""
        return f"[layer {self.name}] (line {self.line})"


@dataclass(frozen=True)
class NetworkConfig:
    """A validated, shape-inferred layer stack.

    Attributes:
        layers: Ordered layer specs.
        input_shape: (C, H, W) network input.
        classes: Class count.
        seed: Default seed for initialization and training.
        source: The config text it was parsed from.
    """

    layers: tuple[LayerSpec, ...]
    input_shape: ChwShape
    classes: int
    seed: int = DEFAULT_SEED
    source: str = ""

    @property
    def canonical_text(self) -> str:
        """Return the whitespace- and comment-normalized config text."""
        return canonical_text(self.source)

    @property
    def fingerprint(self) -> int:
        """Return the 64-bit FNV-1a hash of the canonical text."""
        return fnv1a_64(self.canonical_text.encode("utf-8"))

    def describe_shapes(self) -> list[tuple[str, str, ChwShape]]:
        """Return (name, type, output shape) for every layer."""
        return [(spec.name, spec.type, spec.out_shape) for spec in self.layers]


def canonical_text(text: str) -> str:
    """Strip comments and blank lines and collapse whitespace.

    Returns:
        One normalized line per meaningful source line.
    """
    lines = []
    for raw in text.splitlines():
        line = " ".join(raw.split("#", 1)[0].split())
        line = re.sub(r"\s*=\s*", "=", line)
        if line:
            lines.append(line)
    return "\n".join(lines)


def fnv1a_64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    value = 0xCBF29CE484222325
    for byte in data:
        value ^= byte
        value = (value * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return value


def _parse_value(key: str, value: str, where: str) -> Any:
    """Convert a raw value for ``key``.

    Raises:
        ConfigError: If the value does not parse.
    """
    try:
        if key in INT_KEYS:
            return int(value)
        if key in FLOAT_KEYS:
            return float(value)
        if key == "normalize":
            lowered = value.lower()
            if lowered not in {"true", "false", "yes", "no", "1", "0"}:
                raise ValueError(value)
            return lowered in {"true", "yes", "1"}
        if key == "input":
            dims = tuple(int(part) for part in value.lower().split("x"))
            if len(dims) != 3 or min(dims) < 1:
                raise ValueError(value)
            return dims
    except ValueError as e:
        raise ConfigError(f"{where}: invalid value {value!r} for '{key}'") from e
    return value


def _read_sections(
    text: str,
) -> tuple[dict[str, Any], int, list[tuple[str, int, dict[str, Any]]]]:
    """Split config text into the net section and the layer sections.

    Raises:
        ConfigError: On syntax errors, unknown keys or duplicates.
    """
    net: dict[str, Any] = {}
    net_line = 0
    layers: list[tuple[str, int, dict[str, Any]]] = []
    current: dict[str, Any] | None = None
    section = ""

    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"line {number}"
        header = _SECTION.match(line)
        if header:
            if header.group(2) is None:
                if net_line:
                    raise ConfigError(f"{where}: duplicate [net] section")
                net_line, current, section = number, net, "net"
            else:
                name = header.group(2)
                if any(existing == name for existing, _, _ in layers):
                    raise ConfigError(f"{where}: duplicate layer name '{name}'")
                current = {}
                layers.append((name, number, current))
                section = f"layer {name}"
            continue
        assign = _ASSIGN.match(line)
        if not assign:
            raise ConfigError(f"{where}: expected 'key = value' or a section header")
        if current is None:
            raise ConfigError(f"{where}: key outside of any section")
        key, value = assign.group(1), assign.group(2).strip()
        if key in current:
            raise ConfigError(f"{where}: duplicate key '{key}' in [{section}]")
        if section == "net":
            if key not in NET_KEYS:
                raise ConfigError(f"{where}: unknown key '{key}' in [net]")
        elif key != "type" and not any(key in keys for keys in LAYER_KEYS.values()):
            raise ConfigError(f"{where}: unknown key '{key}' in [{section}]")
        current[key] = _parse_value(key, value, where)
        current.setdefault("_lines", {})[key] = number

    if not net_line:
        raise ConfigError("missing [net] section")
    return net, net_line, layers


def _build_spec(name: str, line: int, values: dict[str, Any]) -> LayerSpec:
    """Turn one section's raw values into a LayerSpec (shapes not inferred).

    Raises:
        ConfigError: On a missing type, unknown type, misplaced or missing key.
    """
    label = f"[layer {name}] (line {line})"
    lines = values.pop("_lines", {})
    kind = values.pop("type", None)
    if kind is None:
        raise ConfigError(f"{label}: missing required key 'type'")
    if kind not in LAYER_KEYS:
        raise ConfigError(
            f"{label}: unknown layer type '{kind}' "
            f"(expected one of {', '.join(LAYER_KEYS)})"
        )
    for key in values:
        if key not in LAYER_KEYS[kind]:
            raise ConfigError(
                f"{label}: key '{key}' (line {lines.get(key, line)}) is not valid "
                f"for {kind} layers"
            )
    for key in REQUIRED_KEYS.get(kind, ()):
        if key not in values:
            raise ConfigError(f"{label}: missing required key '{key}'")
    if kind == "epitomic" and "epitome" not in values and "pool" not in values:
        raise ConfigError(f"{label}: epitomic layers need 'epitome' or 'pool'")

    lrn = LrnParams()
    try:
        lrn = LrnParams(
            n=values.pop("lrn_n", lrn.n),
            alpha=values.pop("lrn_alpha", lrn.alpha),
            beta=values.pop("lrn_beta", lrn.beta),
            k=values.pop("lrn_k", lrn.k),
        )
    except TensorError as e:
        raise ConfigError(f"{label}: {e}") from e

    renamed = {"lambda": "lam"}
    kwargs = {renamed.get(key, key): value for key, value in values.items()}
    if kind == "topographic":
        kwargs.setdefault("normalize", True)
    spec = LayerSpec(
        name=name, type=cast(LayerType, kind), line=line, lrn=lrn, **kwargs
    )

    if spec.type == "epitomic" and spec.epitome is None:
        assert spec.filter is not None and spec.pool is not None
        spec = replace(spec, epitome=spec.filter + spec.pool - 1)
    elif spec.type == "epitomic" and spec.pool is not None:
        assert spec.filter is not None and spec.epitome is not None
        if spec.epitome != spec.filter + spec.pool - 1:
            raise ConfigError(
                f"{label}: epitome {spec.epitome} disagrees with filter "
                f"{spec.filter} and pool {spec.pool} (expected "
                f"{spec.filter + spec.pool - 1})"
            )
    if spec.normalize and spec.lam <= 0:
        raise ConfigError(f"{label}: normalized layers need lambda > 0")
    if not 0 <= spec.dropout < 1:
        raise ConfigError(f"{label}: dropout must be in [0, 1)")
    positive = ("channels", "epitomes", "filter", "stride", "epitome_stride")
    for key in (*positive, "pool", "pool_stride"):
        value = getattr(spec, key)
        if value is not None and value < 1:
            raise ConfigError(f"{label}: '{key}' must be >= 1")
    return spec


def _infer(spec: LayerSpec, shape: ChwShape) -> ChwShape:
    """Output shape of ``spec`` applied to an input of ``shape``.

    Raises:
        TensorError: If the layer does not fit its input.
    """
    channels, height, width = shape
    layer = spec.name
    if spec.type in {"epitomic", "topographic"}:
        assert spec.epitomes and spec.epitome and spec.filter
        if spec.epitome - spec.filter > MAX_EPITOME_OFFSET:
            raise TensorError(
                f"epitome {spec.epitome} is too large for filter {spec.filter} "
                f"(offsets are limited to {MAX_EPITOME_OFFSET})"
            )
        nc = candidate_count(spec.epitome, spec.filter, spec.epitome_stride)
        count = spec.epitomes
        if spec.type == "topographic":
            assert spec.pool is not None
            count *= pooled_count(nc, spec.pool) ** 2
        return (
            count,
            output_side(height, spec.filter, spec.stride, layer),
            output_side(width, spec.filter, spec.stride, layer),
        )
    if spec.type == "conv":
        assert spec.channels and spec.filter
        height = output_side(height, spec.filter, spec.stride, layer)
        width = output_side(width, spec.filter, spec.stride, layer)
        if spec.pool is not None and spec.pool > 1:
            height = output_side(height, spec.pool, spec.pool_stride, layer)
            width = output_side(width, spec.pool, spec.pool_stride, layer)
        return (spec.channels, height, width)
    if spec.type == "maxpool":
        assert spec.pool is not None
        return (
            channels,
            output_side(height, spec.pool, spec.pool_stride, layer),
            output_side(width, spec.pool, spec.pool_stride, layer),
        )
    if spec.type == "fc":
        assert spec.channels is not None
        return (spec.channels, 1, 1)
    return shape


def parse_config(text: str) -> NetworkConfig:
    """Parse, validate and shape-infer a network config.

    Args:
        text: Config text.

    Returns:
        The validated config.

    Raises:
        ConfigError: On any syntax, key, value or shape-chain problem.
    """
    net, net_line, sections = _read_sections(text)
    net.pop("_lines", None)
    if "input" not in net:
        raise ConfigError(f"[net] (line {net_line}): missing required key 'input'")
    if "classes" not in net:
        raise ConfigError(f"[net] (line {net_line}): missing required key 'classes'")
    if not sections:
        raise ConfigError("config defines no layers")

    specs = [_build_spec(name, line, values) for name, line, values in sections]
    softmaxes = [spec for spec in specs if spec.type == "softmax"]
    if len(softmaxes) != 1 or specs[-1].type != "softmax":
        raise ConfigError("config needs exactly one softmax layer, placed last")

    shape: ChwShape = net["input"]
    previous = "input"
    inferred: list[LayerSpec] = []
    for spec in specs:
        try:
            out_shape = _infer(spec, shape)
        except TensorError as e:
            raise ConfigError(
                f"{spec.label} cannot follow '{previous}' with output "
                f"{'x'.join(map(str, shape))}: {e}"
            ) from e
        if spec.type == "softmax":
            classes = spec.classes if spec.classes is not None else net["classes"]
            if shape != (classes, 1, 1) or classes != net["classes"]:
                raise ConfigError(
                    f"{spec.label} expects {net['classes']} logits but '{previous}' "
                    f"produces {'x'.join(map(str, shape))}"
                )
            spec = replace(spec, classes=classes)
        inferred.append(replace(spec, in_shape=shape, out_shape=out_shape))
        shape, previous = out_shape, spec.name

    return NetworkConfig(
        layers=tuple(inferred),
        input_shape=net["input"],
        classes=net["classes"],
        seed=net.get("seed", DEFAULT_SEED),
        source=text,
    )


def shipped_configs() -> list[str]:
    """Names of the network configs bundled with the package."""
    root = resources.files("epinet") / "nets"
    return sorted(item.name for item in root.iterdir() if item.name.endswith(".net"))


def load_shipped_config(name: str) -> NetworkConfig:
    """Parse a bundled config by file name (``.net`` optional).

    Raises:
        ConfigError: If no such config is bundled or it does not parse.
    """
    file_name = name if name.endswith(".net") else f"{name}.net"
    ref = resources.files("epinet") / "nets" / file_name
    if not ref.is_file():
        raise ConfigError(
            f"no bundled config '{file_name}' "
            f"(available: {', '.join(shipped_configs())})"
        )
    return parse_config(ref.read_text(encoding="utf-8"))
