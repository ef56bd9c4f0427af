"""Binary checkpoints.

Layout (all integers little-endian)::

    b"DEPN" | u32 version | u64 config fingerprint | u32 tensor count
    per tensor: u16 name length | UTF-8 name | u8 rank | u32 dims... | f32 data
    optimizer velocities, same record layout and parameter order
    u32 epoch | 32-byte PCG64 state (state, inc as u128)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from epinet.config import CHECKPOINT_MAGIC, CHECKPOINT_VERSION, RNG_STATE_BYTES
from epinet.net.config import NetworkConfig
from epinet.net.network import Network, build_network
from epinet.optim import Sgd, SgdConfig
from epinet.tensor import EpinetError
from epinet.utils.formatting import debug_header, debug_item
from epinet.utils.types import Tensor


class CheckpointError(EpinetError):
    """Raised for unreadable, truncated or mismatched checkpoints."""


@dataclass
class Checkpoint:
    """Decoded checkpoint contents.

    Attributes:
        fingerprint: FNV-1a hash of the canonical config text.
        params: Parameters in network order.
        velocities: Momentum buffers in the same order.
        epoch: Completed epochs.
        rng_state: Raw 32-byte training generator state.
        version: Format version.
    """

    fingerprint: int
    params: dict[str, Tensor] = field(default_factory=dict)
    velocities: dict[str, Tensor] = field(default_factory=dict)
    epoch: int = 0
    rng_state: bytes = bytes(RNG_STATE_BYTES)
    version: int = CHECKPOINT_VERSION


def rng_to_bytes(rng: np.random.Generator) -> bytes:
    """Serialize a PCG64 generator's state and increment.

    Raises:
        CheckpointError: If the generator is not PCG64.
    """
    state = rng.bit_generator.state
    if state.get("bit_generator") != "PCG64":
        raise CheckpointError(
            "only PCG64 generators can be checkpointed, "
            f"got {state.get('bit_generator')}"
        )
    inner = state["state"]
    return int(inner["state"]).to_bytes(16, "little") + int(inner["inc"]).to_bytes(
        16, "little"
    )


def rng_from_bytes(raw: bytes) -> np.random.Generator:
    """Rebuild a PCG64 generator from ``rng_to_bytes`` output."""
    if len(raw) != RNG_STATE_BYTES:
        raise CheckpointError(
            f"RNG state must be {RNG_STATE_BYTES} bytes, got {len(raw)}"
        )
    bit_generator = np.random.PCG64()
    bit_generator.state = {
        "bit_generator": "PCG64",
        "state": {
            "state": int.from_bytes(raw[:16], "little"),
            "inc": int.from_bytes(raw[16:], "little"),
        },
        "has_uint32": 0,
        "uinteger": 0,
    }
    return np.random.Generator(bit_generator)


def _encode_tensors(tensors: dict[str, Tensor]) -> bytes:
    parts = []
    for name, value in tensors.items():
        if value.dtype != np.float32:
            raise CheckpointError(
                f"tensor '{name}' is {value.dtype}; checkpoints store float32 only"
            )
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack(f"<B{value.ndim}I", value.ndim, *value.shape))
        parts.append(np.ascontiguousarray(value, dtype="<f4").tobytes())
    return b"".join(parts)


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    """Serialize a checkpoint.

    Raises:
        CheckpointError: If a tensor is not float32 or the sections disagree.
    """
    if list(checkpoint.params) != list(checkpoint.velocities):
        raise CheckpointError("optimizer section must mirror the parameter order")
    header = struct.pack(
        "<4sIQI",
        CHECKPOINT_MAGIC,
        checkpoint.version,
        checkpoint.fingerprint,
        len(checkpoint.params),
    )
    return b"".join(
        (
            header,
            _encode_tensors(checkpoint.params),
            _encode_tensors(checkpoint.velocities),
            struct.pack("<I", checkpoint.epoch),
            checkpoint.rng_state,
        )
    )


class _Reader:
    """Bounds-checked cursor over checkpoint bytes."""

    def __init__(self, data: bytes) -> None:
        self.data = data
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise CheckpointError(
                f"truncated checkpoint: {what} needs {size} bytes at offset "
                f"{self.offset}, file has {len(self.data)}"
            )
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def tensors(self, count: int, section: str) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for index in range(count):
            where = f"{section} tensor {index}"
            (length,) = self.unpack("<H", f"{where} name length")
            try:
                name = self.take(length, f"{where} name").decode("utf-8")
            except UnicodeDecodeError as e:
                raise CheckpointError(f"{where}: name is not valid UTF-8") from e
            (rank,) = self.unpack("<B", f"{where} rank")
            dims = self.unpack(f"<{rank}I", f"{where} dims")
            size = int(np.prod(dims, dtype=np.int64))
            raw = self.take(4 * size, f"{where} data ('{name}')")
            out[name] = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(dims)
        return out


def decode_checkpoint(data: bytes) -> Checkpoint:
    """Parse checkpoint bytes.

    Raises:
        CheckpointError: On bad magic, unsupported version, truncation or
            trailing bytes.
    """
    reader = _Reader(data)
    magic, version, fingerprint, count = reader.unpack("<4sIQI", "header")
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(
            f"not a checkpoint: magic {magic!r}, expected {CHECKPOINT_MAGIC!r}"
        )
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )
    params = reader.tensors(count, "parameter")
    velocities = reader.tensors(count, "optimizer")
    if list(params) != list(velocities):
        raise CheckpointError("optimizer section does not mirror the parameter section")
    (epoch,) = reader.unpack("<I", "epoch")
    rng_state = reader.take(RNG_STATE_BYTES, "RNG state")
    if reader.offset != len(data):
        raise CheckpointError(
            f"{len(data) - reader.offset} trailing bytes after checkpoint"
        )
    return Checkpoint(
        fingerprint=fingerprint,
        params=params,
        velocities=velocities,
        epoch=epoch,
        rng_state=rng_state,
        version=version,
    )


def save_checkpoint(
    net: Network,
    optimizer: Sgd,
    path: Path,
    *,
    epoch: int,
    rng: np.random.Generator,
    verbose: bool = False,
) -> None:
    """Write the network, optimizer and training RNG to ``path``.

    Raises:
        CheckpointError: If the network is not float32 or the write fails.
    """
    velocities = optimizer.velocities()
    params = net.named_params()
    checkpoint = Checkpoint(
        fingerprint=net.config.fingerprint,
        params=params,
        velocities={name: velocities[name] for name in params},
        epoch=epoch,
        rng_state=rng_to_bytes(rng),
    )
    data = encode_checkpoint(checkpoint)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    except OSError as e:
        raise CheckpointError(f"cannot write checkpoint {path}: {e}") from e
    if verbose:
        debug_header("Checkpoint saved")
        debug_item("Path", str(path))
        debug_item("Epoch", str(epoch))
        debug_item("Bytes", str(len(data)))


def read_checkpoint(path: Path) -> Checkpoint:
    """Read and decode a checkpoint file.

    Raises:
        CheckpointError: If the file is missing or malformed.
    """
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    return decode_checkpoint(data)


def load_checkpoint(
    path: Path,
    config: NetworkConfig,
    sgd_config: SgdConfig | None = None,
    *,
    verbose: bool = False,
) -> tuple[Network, Sgd, int, np.random.Generator]:
    """Restore a training state saved with ``save_checkpoint``.

    Args:
        path: Checkpoint file.
        config: The config the checkpoint was trained from.
        sgd_config: Optimizer settings for the restored optimizer.
        verbose: Print checkpoint details.

    Returns:
        (network, optimizer, completed epochs, training generator).

    Raises:
        CheckpointError: On a fingerprint mismatch or malformed file.
    """
    checkpoint = read_checkpoint(path)
    if checkpoint.fingerprint != config.fingerprint:
        raise CheckpointError(
            f"checkpoint {path} was written for config fingerprint "
            f"{checkpoint.fingerprint:016x}, this config is {config.fingerprint:016x}"
        )
    net = build_network(config, dtype=np.float32)
    try:
        net.load_params(checkpoint.params)
        optimizer = Sgd(net.param_groups(), sgd_config or SgdConfig())
        optimizer.load_velocities(checkpoint.velocities)
    except EpinetError as e:
        raise CheckpointError(f"checkpoint {path}: {e}") from e
    if verbose:
        debug_header("Checkpoint loaded")
        debug_item("Path", str(path))
        debug_item("Fingerprint", f"{checkpoint.fingerprint:016x}")
        debug_item("Epoch", str(checkpoint.epoch))
    return net, optimizer, checkpoint.epoch, rng_from_bytes(checkpoint.rng_state)
