"""Filter-grid images and training-log comparison."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from epinet.net import Network
from epinet.tensor import EpinetError
from epinet.utils.types import Tensor


class ExportError(EpinetError):
    """Raised when an artifact cannot be produced."""


def grid_columns(count: int) -> int:
    """Columns of a near-square grid for ``count`` tiles.

    The smallest divisor of ``count`` between ``s = ⌈√count⌉`` and ``2s``,
    else ``s``.
    """
    side = math.isqrt(count - 1) + 1 if count > 1 else 1
    for cols in range(side, 2 * side + 1):
        if count % cols == 0:
            return cols
    return side


def select_layer(net: Network, layer: str | None) -> tuple[str, Tensor]:
    """Return (name, (K, C, S, S) weights) of an image-like parameter layer.

    Args:
        net: Network holding the parameters.
        layer: Layer name or 1-based index; the first such layer when None.

    Raises:
        ExportError: If the layer does not exist or has no filter images.
    """
    layers = net.layers
    if layer is None:
        candidates = [
            item
            for item in layers
            if getattr(item.params().get("weights"), "ndim", 0) == 4
        ]
        if not candidates:
            raise ExportError("network has no epitomic or conv layer to export")
        chosen = candidates[0]
    elif layer.isdigit():
        index = int(layer)
        if not 1 <= index <= len(layers):
            raise ExportError(f"layer index {index} out of range 1..{len(layers)}")
        chosen = layers[index - 1]
    else:
        named = [item for item in layers if item.name == layer]
        if not named:
            raise ExportError(f"no layer named '{layer}'")
        chosen = named[0]
    weights = chosen.params().get("weights")
    if weights is None:
        raise ExportError(f"layer '{chosen.name}' has no parameters to export")
    if weights.ndim != 4:
        raise ExportError(f"layer '{chosen.name}' weights are not filter images")
    return chosen.name, weights


def _tile_rgb(tile: Tensor) -> np.ndarray:
    """Min-max normalize one (C, S, S) tile to (S, S, 3) bytes."""
    if tile.shape[0] == 3:
        rgb = tile.transpose(1, 2, 0)
    else:
        gray = tile[0] if tile.shape[0] == 1 else tile.mean(axis=0)
        rgb = np.repeat(gray[:, :, None], 3, axis=2)
    low, high = float(rgb.min()), float(rgb.max())
    if high == low:
        return np.full(rgb.shape, 128, dtype=np.uint8)
    return np.rint((rgb - low) / (high - low) * 255).astype(np.uint8)


def filter_grid(weights: Tensor) -> np.ndarray:
    """Lay (K, C, S, S) filters out row-major with 1-pixel black separators.

    Returns:
        (rows·(S+1)+1, cols·(S+1)+1, 3) uint8 image.
    """
    count, _, side, _ = weights.shape
    cols = grid_columns(count)
    rows = -(-count // cols)
    image = np.zeros((rows * (side + 1) + 1, cols * (side + 1) + 1, 3), dtype=np.uint8)
    for index in range(count):
        row, col = divmod(index, cols)
        y, x = 1 + row * (side + 1), 1 + col * (side + 1)
        image[y : y + side, x : x + side] = _tile_rgb(weights[index])
    return image


def write_ppm(image: np.ndarray, path: Path) -> None:
    """Write an (H, W, 3) uint8 image as binary PPM (P6).

    Raises:
        ExportError: If the file cannot be written.
    """
    height, width, _ = image.shape
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        header = f"P6\n{width} {height}\n255\n".encode("ascii")
        path.write_bytes(header + image.tobytes())
    except OSError as e:
        raise ExportError(f"cannot write {path}: {e}") from e


@dataclass(frozen=True)
class LogRow:
    """One epoch line of ``train_log.csv``."""

    epoch: int
    step: int
    lr: float
    train_loss: float
    val_error_top1: float


def read_log(path: Path) -> list[LogRow]:
    """Parse a training log.

    Raises:
        ExportError: If the file is missing or malformed.
    """
    try:
        with path.open(newline="", encoding="utf-8") as handle:
            return [
                LogRow(
                    epoch=int(row["epoch"]),
                    step=int(row["step"]),
                    lr=float(row["lr"]),
                    train_loss=float(row["train_loss"]),
                    val_error_top1=float(row["val_error_top1"]),
                )
                for row in csv.DictReader(handle)
            ]
    except OSError as e:
        raise ExportError(f"cannot read training log {path}: {e}") from e
    except (KeyError, TypeError, ValueError) as e:
        raise ExportError(f"malformed training log {path}: {e}") from e


def compare_logs(
    first: list[LogRow], second: list[LogRow], epoch: int
) -> tuple[LogRow, LogRow]:
    """Return the rows of both logs at ``epoch``.

    Raises:
        ExportError: If either log does not reach that epoch.
    """
    picked = []
    for rows in (first, second):
        match = [row for row in rows if row.epoch == epoch]
        if not match:
            last = rows[-1].epoch if rows else 0
            raise ExportError(f"log stops at epoch {last}, epoch {epoch} requested")
        picked.append(match[-1])
    return picked[0], picked[1]
