"""Network configuration, assembly and checkpointing."""

from __future__ import annotations

from epinet.net.checkpoint import (
    Checkpoint,
    CheckpointError,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    read_checkpoint,
    rng_from_bytes,
    rng_to_bytes,
    save_checkpoint,
)
from epinet.net.config import (
    ConfigError,
    LayerSpec,
    NetworkConfig,
    load_shipped_config,
    parse_config,
    shipped_configs,
)
from epinet.net.network import Network, build_network, seed_streams
from epinet.net.stack import Layer, NetworkError

__all__ = [
    "Checkpoint",
    "CheckpointError",
    "ConfigError",
    "Layer",
    "LayerSpec",
    "Network",
    "NetworkConfig",
    "NetworkError",
    "build_network",
    "decode_checkpoint",
    "encode_checkpoint",
    "load_shipped_config",
    "load_checkpoint",
    "parse_config",
    "read_checkpoint",
    "rng_from_bytes",
    "rng_to_bytes",
    "save_checkpoint",
    "seed_streams",
    "shipped_configs",
]
