"""MNIST (IDX) and CIFAR-10 (binary) loaders and mean preprocessing."""

from __future__ import annotations

import gzip
import struct
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Final

import numpy as np

from epinet.tensor import EpinetError
from epinet.utils.formatting import debug_header, debug_item
from epinet.utils.types import DatasetName, Split, Tensor

IDX_IMAGES_MAGIC: Final[int] = 0x00000803
IDX_LABELS_MAGIC: Final[int] = 0x00000801
CIFAR_SIDE: Final[int] = 32
CIFAR_RECORD_BYTES: Final[int] = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE
CLASSES: Final[int] = 10

MNIST_FILES: Final[dict[Split, tuple[str, str]]] = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
CIFAR_FILES: Final[dict[Split, tuple[str, ...]]] = {
    "train": tuple(f"data_batch_{index}.bin" for index in range(1, 6)),
    "test": ("test_batch.bin",),
}
CIFAR_SUBDIR: Final[str] = "cifar-10-batches-bin"


class DataError(EpinetError):
    """Raised for missing, malformed or truncated dataset files."""


@dataclass(frozen=True)
class Dataset:
    """Images with labels.

    Attributes:
        images: (N, C, H, W) float32 pixels, in [0, 1] before preprocessing.
        labels: (N,) class indices.
        split: Which split the images came from.
        mean: Per-channel mean subtracted by ``preprocess`` (zeros before).
        classes: Class count.
    """

    images: Tensor
    labels: np.ndarray
    split: Split = "train"
    mean: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.float32))
    classes: int = CLASSES

    def __post_init__(self) -> None:
        """Check the images and labels agree.

        Raises:
            DataError: On a count mismatch or an out-of-range label.
        """
        if self.images.ndim != 4:
            raise DataError(f"images must be (N, C, H, W), got {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise DataError(
                f"{self.labels.shape[0]} labels for {self.images.shape[0]} images"
            )
        labels = self.labels
        if labels.size and (labels.min() < 0 or labels.max() >= self.classes):
            raise DataError(f"labels must lie in [0, {self.classes})")
        if self.mean.size == 0:
            object.__setattr__(
                self, "mean", np.zeros(self.images.shape[1], dtype=np.float32)
            )

    def __len__(self) -> int:
        return int(self.images.shape[0])

    @property
    def shape(self) -> tuple[int, int, int]:
        """Return the (C, H, W) image shape."""
        _, c, h, w = self.images.shape
        return (c, h, w)

    def head(self, limit: int | None) -> Dataset:
        """Return the first ``limit`` examples (all when None)."""
        if limit is None or limit >= len(self):
            return self
        return replace(self, images=self.images[:limit], labels=self.labels[:limit])


def _read_bytes(path: Path) -> bytes:
    try:
        if path.suffix == ".gz":
            with gzip.open(path, "rb") as handle:
                return handle.read()
        return path.read_bytes()
    except (OSError, EOFError) as e:
        raise DataError(f"cannot read {path}: {e}") from e


def _idx_header(data: bytes, magic: int, dims: int, path: Path) -> tuple[int, ...]:
    size = 4 * (dims + 1)
    if len(data) < size:
        raise DataError(f"{path}: truncated IDX header")
    found, *shape = struct.unpack(f">{dims + 1}I", data[:size])
    if found != magic:
        raise DataError(
            f"{path}: IDX magic 0x{found:08x}, expected 0x{magic:08x} "
            "(are image and label files swapped?)"
        )
    expected = size + int(np.prod(shape))
    if len(data) != expected:
        raise DataError(f"{path}: {len(data)} bytes, header announces {expected}")
    return tuple(shape)


def load_mnist(images_path: Path, labels_path: Path, split: Split = "train") -> Dataset:
    """Load an MNIST image/label file pair (optionally gzip-compressed).

    Args:
        images_path: IDX3 image file.
        labels_path: IDX1 label file.
        split: Split tag for the result.

    Returns:
        (N, 1, 28, 28) images scaled by 1/255 with their labels.

    Raises:
        DataError: On magic, count or length mismatches.
    """
    image_data = _read_bytes(images_path)
    label_data = _read_bytes(labels_path)
    count, rows, cols = _idx_header(image_data, IDX_IMAGES_MAGIC, 3, images_path)
    (n_labels,) = _idx_header(label_data, IDX_LABELS_MAGIC, 1, labels_path)
    if n_labels != count:
        raise DataError(
            f"{images_path} holds {count} images "
            f"but {labels_path} holds {n_labels} labels"
        )
    pixels = np.frombuffer(image_data, dtype=np.uint8, offset=16)
    images = (pixels.reshape(count, 1, rows, cols).astype(np.float32)) / np.float32(255)
    labels = np.frombuffer(label_data, dtype=np.uint8, offset=8).astype(np.int64)
    return Dataset(images=images, labels=labels, split=split)


def encode_idx(dataset: Dataset) -> tuple[bytes, bytes]:
    """Re-encode single-channel [0, 1] images and labels as IDX bytes."""
    n, c, h, w = dataset.images.shape
    if c != 1:
        raise DataError(f"IDX encoding needs single-channel images, got {c} channels")
    pixels = np.rint(dataset.images * 255).clip(0, 255).astype(np.uint8)
    image_bytes = struct.pack(">4I", IDX_IMAGES_MAGIC, n, h, w) + pixels.tobytes()
    label_bytes = struct.pack(">2I", IDX_LABELS_MAGIC, n) + dataset.labels.astype(
        np.uint8
    ).tobytes()
    return image_bytes, label_bytes


def load_cifar10(batch_paths: Sequence[Path], split: Split = "train") -> Dataset:
    """Load and concatenate CIFAR-10 binary batch files.

    Each record is one label byte and 3072 channel-planar RGB bytes.

    Raises:
        DataError: If a file length is not a whole number of records.
    """
    images, labels = [], []
    for path in batch_paths:
        data = _read_bytes(path)
        if len(data) % CIFAR_RECORD_BYTES:
            raise DataError(
                f"{path}: length {len(data)} is not a multiple of the "
                f"{CIFAR_RECORD_BYTES}-byte record size"
            )
        records = np.frombuffer(data, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        labels.append(records[:, 0].astype(np.int64))
        images.append(
            records[:, 1:].reshape(-1, 3, CIFAR_SIDE, CIFAR_SIDE).astype(np.float32)
            / np.float32(255)
        )
    if not images:
        raise DataError("no CIFAR-10 batch files given")
    return Dataset(
        images=np.concatenate(images), labels=np.concatenate(labels), split=split
    )


def _find(data_dir: Path, name: str) -> Path:
    """Locate ``name`` (or its ``.gz`` / dotted-extension variant) in ``data_dir``."""
    dotted = name.replace("-idx", ".idx")
    candidates = [
        data_dir / base / f"{stem}{suffix}"
        for base in ("", CIFAR_SUBDIR)
        for stem in dict.fromkeys((name, dotted))
        for suffix in ("", ".gz")
    ]
    for path in candidates:
        if path.is_file():
            return path
    raise DataError(f"dataset file '{name}' not found under {data_dir}")


def load_split(
    data_dir: Path, dataset: DatasetName, split: Split, *, verbose: bool = False
) -> Dataset:
    """Load a standard split from a dataset directory.

    Raises:
        DataError: If the files are missing or malformed.
    """
    if dataset == "mnist":
        images_name, labels_name = MNIST_FILES[split]
        ds = load_mnist(
            _find(data_dir, images_name), _find(data_dir, labels_name), split
        )
    elif dataset == "cifar10":
        ds = load_cifar10([_find(data_dir, name) for name in CIFAR_FILES[split]], split)
    else:
        raise DataError(f"unknown dataset '{dataset}' (expected mnist or cifar10)")
    if verbose:
        debug_header(f"Loaded {dataset} {split}")
        debug_item("Directory", str(data_dir))
        debug_item("Examples", str(len(ds)))
        debug_item("Shape", "x".join(map(str, ds.shape)))
    return ds


def preprocess(ds: Dataset, mean: np.ndarray | None = None) -> Dataset:
    """Subtract a per-channel mean.

    Args:
        ds: Dataset to shift.
        mean: Mean to subtract; computed from ``ds`` when None. Pass the
            training mean when preprocessing the test split.

    Returns:
        A new dataset whose ``mean`` records what was subtracted.
    """
    if mean is None:
        mean = ds.images.mean(axis=(0, 2, 3), dtype=np.float64)
    mean = np.asarray(mean, dtype=ds.images.dtype)
    if mean.shape != (ds.images.shape[1],):
        raise DataError(f"mean of shape {mean.shape} for {ds.images.shape[1]} channels")
    return replace(ds, images=ds.images - mean.reshape(1, -1, 1, 1), mean=mean)
