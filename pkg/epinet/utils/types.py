"""Type definitions and aliases for the epinet package.

This module defines run-level configuration dataclasses built by the CLI and
the type aliases shared across layers, optimizer and network code.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
import numpy.typing as npt

from epinet.config import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_LR,
    DEFAULT_MOMENTUM,
    DEFAULT_WEIGHT_DECAY,
)

# Tensor types
Tensor = npt.NDArray[np.floating]
Shape = tuple[int, int, int, int]
ChwShape = tuple[int, int, int]

# Layer and run modes
Mode = Literal["train", "eval"]
DatasetName = Literal["mnist", "cifar10"]
Split = Literal["train", "test"]
LayerType = Literal[
    "epitomic",
    "topographic",
    "conv",
    "maxpool",
    "relu",
    "lrn",
    "dropout",
    "fc",
    "softmax",
]


@dataclass
class TrainConfig:
    """Configuration for a training run.

    Attributes:
        config_path: Network config file.
        data_dir: Dataset directory.
        out_dir: Directory receiving the log and checkpoints.
        epochs: Total number of epochs to reach (resumed runs included).
        seed: Seed for initialization and all training randomness; the
            config's [net] seed when None.
        lr: Initial learning rate.
        momentum: Momentum coefficient.
        weight_decay: Global weight decay factor.
        batch_size: Minibatch size.
        schedule: Learning-rate steps as (epoch, multiplier) pairs.
        resume: Optional checkpoint to resume from.
        dataset: Dataset name; inferred from the input channels when None.
        flip: Horizontal flip augmentation; dataset default when None.
        limit: Optional cap on the number of training samples.
        verbose: Whether to show debug information.
    """

    config_path: Path
    data_dir: Path
    out_dir: Path
    epochs: int
    seed: int | None = None
    lr: float = DEFAULT_LR
    momentum: float = DEFAULT_MOMENTUM
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    batch_size: int = DEFAULT_BATCH_SIZE
    schedule: tuple[tuple[int, float], ...] = ()
    resume: Path | None = None
    dataset: DatasetName | None = None
    flip: bool | None = None
    limit: int | None = None
    verbose: bool = False


@dataclass
class EvalConfig:
    """Configuration for an evaluation run.

    Attributes:
        checkpoint: Checkpoint to evaluate.
        config_path: Network config the checkpoint was trained with.
        data_dir: Dataset directory.
        split: Which split to evaluate on.
        dataset: Dataset name; inferred from the input channels when None.
        batch_size: Evaluation batch size.
        limit: Optional cap on the number of evaluated samples.
        verbose: Whether to show debug information.
    """

    checkpoint: Path
    config_path: Path
    data_dir: Path
    split: Split = "test"
    dataset: DatasetName | None = None
    batch_size: int = DEFAULT_BATCH_SIZE
    limit: int | None = None
    verbose: bool = False
