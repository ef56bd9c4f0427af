"""Dataset loading, preprocessing and augmentation."""

from __future__ import annotations

from epinet.data.augment import AugmentSpec, augment, crop_origins, iterate_batches
from epinet.data.loaders import (
    DataError,
    Dataset,
    encode_idx,
    load_cifar10,
    load_mnist,
    load_split,
    preprocess,
)

__all__ = [
    "AugmentSpec",
    "DataError",
    "Dataset",
    "augment",
    "crop_origins",
    "encode_idx",
    "iterate_batches",
    "load_cifar10",
    "load_mnist",
    "load_split",
    "preprocess",
]
