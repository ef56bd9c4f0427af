"""Crop/flip augmentation and minibatch iteration."""

from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np

from epinet.data.loaders import DataError, Dataset
from epinet.utils.types import Tensor


@dataclass(frozen=True)
class AugmentSpec:
    """Crop side and flip flag.

    Attributes:
        crop: Side of the square crop taken from each image.
        flip: Mirror left-to-right with probability 0.5 during training.
    """

    crop: int
    flip: bool = False

    def __post_init__(self) -> None:
        """Validate the crop side.

        Raises:
            DataError: If the crop side is not positive.
        """
        if self.crop < 1:
            raise DataError(f"crop side must be >= 1, got {self.crop}")


def crop_origins(
    n: int, side: tuple[int, int], crop: int, rng: np.random.Generator | None
) -> np.ndarray:
    """Return (n, 2) crop origins: uniform with ``rng``, centered without.

    Raises:
        DataError: If the crop is larger than the image.
    """
    height, width = side
    if crop > height or crop > width:
        raise DataError(f"crop {crop} exceeds image {height}x{width}")
    if rng is None:
        return np.tile([(height - crop) // 2, (width - crop) // 2], (n, 1))
    return np.stack(
        [
            rng.integers(0, height - crop + 1, size=n),
            rng.integers(0, width - crop + 1, size=n),
        ],
        axis=1,
    )


def augment(
    batch: Tensor,
    spec: AugmentSpec,
    rng: np.random.Generator | None,
    train: bool = True,
) -> Tensor:
    """Crop (and in training, maybe flip) every image of a batch.

    Args:
        batch: (N, C, H, W) images.
        spec: Crop side and flip flag.
        rng: Generator for origins and flips; required when ``train``.
        train: Random crops and flips; otherwise a center crop.

    Returns:
        (N, C, crop, crop) images.

    Raises:
        DataError: If the crop does not fit or no generator is given.
    """
    if train and rng is None:
        raise DataError("training augmentation needs a random generator")
    n, _, height, width = batch.shape
    origins = crop_origins(n, (height, width), spec.crop, rng if train else None)
    flips = (
        rng.random(n) < 0.5
        if train and spec.flip and rng is not None
        else np.zeros(n, dtype=bool)
    )
    out = np.empty(batch.shape[:2] + (spec.crop, spec.crop), dtype=batch.dtype)
    for index, ((y, x), flip) in enumerate(zip(origins, flips)):
        patch = batch[index, :, y : y + spec.crop, x : x + spec.crop]
        out[index] = patch[:, :, ::-1] if flip else patch
    return out


def iterate_batches(
    ds: Dataset,
    batch_size: int,
    rng: np.random.Generator | None = None,
    shuffle: bool = True,
) -> Iterator[tuple[Tensor, np.ndarray]]:
    """Yield (images, labels) minibatches, keeping the final partial batch.

    Raises:
        DataError: If shuffling is requested without a generator.
    """
    if batch_size < 1:
        raise DataError(f"batch size must be >= 1, got {batch_size}")
    if shuffle:
        if rng is None:
            raise DataError("shuffling needs a random generator")
        order = rng.permutation(len(ds))
    else:
        order = np.arange(len(ds))
    for start in range(0, len(ds), batch_size):
        index = order[start : start + batch_size]
        yield ds.images[index], ds.labels[index]
