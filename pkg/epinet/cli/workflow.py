"""Training and evaluation orchestration.

``TrainingWorkflow`` and ``EvaluationWorkflow`` run one CLI command each. Every
step either succeeds or prints an error panel, and ``run`` returns the process
exit code.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Final

import numpy as np
from rich.progress import BarColumn, MofNCompleteColumn, Progress, TextColumn

from epinet.data import (
    AugmentSpec,
    DataError,
    Dataset,
    augment,
    iterate_batches,
    load_split,
    preprocess,
)
from epinet.net import (
    Network,
    NetworkConfig,
    build_network,
    load_checkpoint,
    parse_config,
    save_checkpoint,
    seed_streams,
)
from epinet.optim import Sgd, SgdConfig
from epinet.tensor import EpinetError
from epinet.utils.formatting import (
    console,
    debug_header,
    debug_item,
    debug_json,
    print_error,
    success,
)
from epinet.utils.types import DatasetName, EvalConfig, TrainConfig

LOG_COLUMNS: Final[tuple[str, ...]] = (
    "epoch",
    "step",
    "lr",
    "train_loss",
    "val_error_top1",
)
LOG_NAME: Final[str] = "train_log.csv"
FINAL_CHECKPOINT: Final[str] = "final.ckpt"


def epoch_checkpoint_name(epoch: int) -> str:
    """Checkpoint file name written after ``epoch`` completed epochs."""
    return f"epoch_{epoch:03d}.ckpt"


def read_network_config(path: Path, *, verbose: bool = False) -> NetworkConfig:
    """Read and parse a network config file.

    Raises:
        EpinetError: If the file is unreadable or invalid.
    """
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise EpinetError(f"cannot read network config {path}: {e}") from e
    config = parse_config(text)
    if verbose:
        debug_header(f"Network config {path.name}")
        debug_item("Input", "x".join(map(str, config.input_shape)))
        debug_item("Fingerprint", f"{config.fingerprint:016x}")
        for name, kind, shape in config.describe_shapes():
            debug_item(f"{name} ({kind})", "x".join(map(str, shape)))
    return config


def infer_dataset(config: NetworkConfig, dataset: DatasetName | None) -> DatasetName:
    """Return ``dataset`` or guess it from the input channel count."""
    if dataset is not None:
        return dataset
    return "mnist" if config.input_shape[0] == 1 else "cifar10"


@dataclass(frozen=True)
class PreparedData:
    """Preprocessed splits with the crop geometry of the network."""

    train: Dataset
    test: Dataset
    augment: AugmentSpec


def prepare_data(
    config: NetworkConfig,
    data_dir: Path,
    dataset: DatasetName,
    *,
    flip: bool | None = None,
    verbose: bool = False,
) -> PreparedData:
    """Load both splits and subtract the training mean from each.

    Raises:
        DataError: If the images do not fit the network input.
    """
    train = load_split(data_dir, dataset, "train", verbose=verbose)
    test = load_split(data_dir, dataset, "test", verbose=verbose)
    channels, height, width = config.input_shape
    if height != width:
        raise DataError(f"network input {height}x{width} is not square")
    if train.shape[0] != channels:
        raise DataError(
            f"{dataset} images have {train.shape[0]} channels, "
            f"network expects {channels}"
        )
    if flip is None:
        flip = dataset == "cifar10"
    spec = AugmentSpec(crop=height, flip=flip)
    train = preprocess(train)
    test = preprocess(test, train.mean)
    if verbose:
        debug_header("Preprocessing")
        debug_item("Channel mean", ", ".join(f"{value:.6f}" for value in train.mean))
        debug_item("Crop", str(spec.crop))
        debug_item("Flip", str(spec.flip))
    return PreparedData(train=train, test=test, augment=spec)


def top1_error(
    net: Network, ds: Dataset, spec: AugmentSpec, batch_size: int
) -> float:
    """Center-crop top-1 error of ``net`` on ``ds``; 0 for an empty set."""
    if len(ds) == 0:
        return 0.0
    wrong = 0
    for images, labels in iterate_batches(ds, batch_size, shuffle=False):
        predicted = net.predict(augment(images, spec, None, train=False))
        wrong += int(np.count_nonzero(predicted != labels))
    return wrong / len(ds)


class TrainingWorkflow:
    """Trains a network from a config, logging and checkpointing every epoch."""

    def __init__(self, config: TrainConfig) -> None:
        """Initialize the workflow.

        Args:
            config: Run options from the command line.
        """
        self.config = config
        self.sgd = SgdConfig(
            lr=config.lr,
            momentum=config.momentum,
            weight_decay=config.weight_decay,
            batch_size=config.batch_size,
            schedule=tuple(config.schedule),
        )

    def run(self) -> int:
        """Execute the training run.

        Returns:
            Exit code (0 for success, 1 on any error).
        """
        try:
            net_config = read_network_config(
                self.config.config_path, verbose=self.config.verbose
            )
            dataset = infer_dataset(net_config, self.config.dataset)
            data = prepare_data(
                net_config,
                self.config.data_dir,
                dataset,
                flip=self.config.flip,
                verbose=self.config.verbose,
            )
            train = data.train.head(self.config.limit)
            if self.config.verbose:
                debug_header("SGD settings")
                debug_json(asdict(self.sgd))
            net, optimizer, start, train_rng = self._initial_state(net_config)
            self._train(net, optimizer, start, train_rng, train, data)
            return 0
        except (EpinetError, OSError) as e:
            print_error(
                f"Training failed:\n{e}",
                "Check the config, data directory and flags.",
                "Training Failed",
            )
            return 1

    def _initial_state(
        self, net_config: NetworkConfig
    ) -> tuple[Network, Sgd, int, np.random.Generator]:
        """Build a fresh network or restore the resume checkpoint."""
        if self.config.resume is not None:
            return load_checkpoint(
                self.config.resume, net_config, self.sgd, verbose=self.config.verbose
            )
        seed = net_config.seed if self.config.seed is None else self.config.seed
        init_rng, train_rng = seed_streams(seed)
        net = build_network(net_config, dtype=np.float32, rng=init_rng)
        return net, Sgd(net.param_groups(), self.sgd), 0, train_rng

    def _open_log(self, resumed: bool) -> Path:
        """Create the log with a header, or keep it when resuming."""
        out_dir = self.config.out_dir
        out_dir.mkdir(parents=True, exist_ok=True)
        log_path = out_dir / LOG_NAME
        if not (resumed and log_path.exists()):
            with log_path.open("w", newline="", encoding="utf-8") as handle:
                csv.writer(handle).writerow(LOG_COLUMNS)
        return log_path

    def _train(
        self,
        net: Network,
        optimizer: Sgd,
        start: int,
        train_rng: np.random.Generator,
        train: Dataset,
        data: PreparedData,
    ) -> None:
        """Run the remaining epochs."""
        cfg = self.config
        log_path = self._open_log(resumed=start > 0)
        steps_per_epoch = -(-len(train) // cfg.batch_size)
        if start >= cfg.epochs:
            console.print(f"Checkpoint already at epoch {start}; nothing to train.")

        for epoch in range(start, cfg.epochs):
            epoch_rng = np.random.Generator(
                np.random.PCG64(int(train_rng.integers(0, 2**63)))
            )
            lr, loss = self._epoch(
                net, optimizer, epoch, epoch_rng, train, data.augment
            )
            val_error = top1_error(net, data.test, data.augment, cfg.batch_size)
            step = (epoch + 1) * steps_per_epoch
            with log_path.open("a", newline="", encoding="utf-8") as handle:
                csv.writer(handle).writerow(
                    (epoch + 1, step, f"{lr:.8g}", f"{loss:.6f}", f"{val_error:.6f}")
                )
            console.print(
                f"epoch {epoch + 1}/{cfg.epochs}  step {step}  lr {lr:.4g}  "
                f"loss {loss:.4f}  val error {val_error:.4f}"
            )
            save_checkpoint(
                net,
                optimizer,
                cfg.out_dir / epoch_checkpoint_name(epoch + 1),
                epoch=epoch + 1,
                rng=train_rng,
                verbose=cfg.verbose,
            )

        final = cfg.out_dir / FINAL_CHECKPOINT
        save_checkpoint(
            net, optimizer, final, epoch=max(start, cfg.epochs), rng=train_rng
        )
        success(f"Training finished; final checkpoint {final}")

    def _epoch(
        self,
        net: Network,
        optimizer: Sgd,
        epoch: int,
        rng: np.random.Generator,
        train: Dataset,
        spec: AugmentSpec,
    ) -> tuple[float, float]:
        """One pass over the training set.

        Returns:
            (learning rate, mean minibatch loss).
        """
        losses = []
        lr = optimizer.cfg.lr
        with Progress(
            TextColumn(f"epoch {epoch + 1}"),
            BarColumn(),
            MofNCompleteColumn(),
            TextColumn("loss {task.fields[loss]:.4f}"),
            console=console,
            transient=True,
        ) as progress:
            task = progress.add_task(
                "train", total=-(-len(train) // self.config.batch_size), loss=0.0
            )
            for images, labels in iterate_batches(train, self.config.batch_size, rng):
                batch = augment(images, spec, rng, train=True)
                loss, _ = net.forward(batch, labels, mode="train", rng=rng)
                assert loss is not None
                lr = optimizer.step(net.backward(), epoch)
                losses.append(loss)
                progress.update(task, advance=1, loss=loss)
        return lr, float(np.mean(losses)) if losses else 0.0


class EvaluationWorkflow:
    """Reports the top-1 error of a checkpoint on one split."""

    def __init__(self, config: EvalConfig) -> None:
        """Initialize the workflow.

        Args:
            config: Run options from the command line.
        """
        self.config = config
        self.error: float | None = None

    def run(self) -> int:
        """Execute the evaluation.

        Returns:
            Exit code (0 for success, 1 on any error).
        """
        cfg = self.config
        try:
            net_config = read_network_config(cfg.config_path, verbose=cfg.verbose)
            net, _, epoch, _ = load_checkpoint(
                cfg.checkpoint, net_config, verbose=cfg.verbose
            )
            data = prepare_data(
                net_config,
                cfg.data_dir,
                infer_dataset(net_config, cfg.dataset),
                verbose=cfg.verbose,
            )
            split = data.train if cfg.split == "train" else data.test
            split = split.head(cfg.limit)
            self.error = top1_error(net, split, data.augment, cfg.batch_size)
        except (EpinetError, OSError) as e:
            print_error(
                f"Evaluation failed:\n{e}",
                "Check the checkpoint, config and data directory.",
                "Evaluation Failed",
            )
            return 1
        console.print(
            f"top-1 error on {cfg.split} ({len(split)} images, epoch {epoch}): "
            f"{self.error:.6f}"
        )
        return 0
