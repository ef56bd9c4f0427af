#!/usr/bin/env python3

"""Command-line interface for epinet.

Subcommands:

- train: fit a network config on MNIST or CIFAR-10
- eval: top-1 error of a checkpoint
- gradcheck: finite-difference check of every backward pass
- export-filters: first-layer epitomes as a PPM image
- compare-logs: validation error of two runs side by side
- setup: write the user configuration file
"""

import sys
from pathlib import Path

import click
import numpy as np

from epinet import __version__
from epinet.cli.export import (
    compare_logs,
    filter_grid,
    read_log,
    select_layer,
    write_ppm,
)
from epinet.cli.workflow import (
    EvaluationWorkflow,
    TrainingWorkflow,
    read_network_config,
)
from epinet.config import (
    COLORS,
    DEFAULT_BATCH_SIZE,
    DEFAULT_DATA_DIR,
    DEFAULT_LR,
    DEFAULT_MOMENTUM,
    DEFAULT_SEED,
    DEFAULT_WEIGHT_DECAY,
)
from epinet.gradcheck import GradCheckReport, check_config, layer_suite, write_csv
from epinet.net import load_checkpoint
from epinet.optim import parse_schedule
from epinet.tensor import EpinetError
from epinet.utils import EvalConfig, TrainConfig
from epinet.utils.formatting import (
    console,
    print_error,
    print_table,
    status,
    success,
)

DATASET_CHOICES: tuple[str, ...] = ("mnist", "cifar10")

_existing_file = click.Path(exists=True, dir_okay=False, path_type=Path)
_checkpoint_file = click.Path(dir_okay=False, path_type=Path)


def _data_dir(data: Path | None) -> Path:
    """Resolve ``--data``, falling back to ``EPINET_DATA``.

    Raises:
        click.UsageError: If neither is set.
    """
    if data is not None:
        return data
    if DEFAULT_DATA_DIR:
        return Path(DEFAULT_DATA_DIR)
    raise click.UsageError("--data is required when EPINET_DATA is not set")


def _fail(error: Exception, title: str, suggestion: str) -> None:
    """Show an error panel and exit with status 1."""
    print_error(str(error), suggestion, title)
    sys.exit(1)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(version=__version__, prog_name="epinet")
def main() -> None:
    """Train and inspect networks with epitomic convolution layers."""


@main.command()
@click.option(
    "--config",
    "config_path",
    type=_existing_file,
    required=True,
    help="Network config file (.net).",
    metavar="<path>",
)
@click.option(
    "--data",
    type=click.Path(file_okay=False, path_type=Path),
    help="Dataset directory. Defaults to EPINET_DATA.",
    metavar="<dir>",
)
@click.option(
    "--epochs", type=click.IntRange(min=0), required=True, help="Epochs to reach."
)
@click.option(
    "--seed",
    type=int,
    default=None,
    help="Seed for initialization, shuffling, augmentation and dropout.",
)
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False, path_type=Path),
    required=True,
    help="Directory for train_log.csv and checkpoints.",
    metavar="<dir>",
)
@click.option(
    "--lr", type=float, default=DEFAULT_LR, show_default=True, help="Learning rate."
)
@click.option(
    "--momentum",
    type=float,
    default=DEFAULT_MOMENTUM,
    show_default=True,
    help="Momentum.",
)
@click.option(
    "--wd",
    "weight_decay",
    type=float,
    default=DEFAULT_WEIGHT_DECAY,
    show_default=True,
    help="Weight decay (not applied to biases or normalized epitomes).",
)
@click.option(
    "--batch",
    "batch_size",
    type=click.IntRange(min=1),
    default=DEFAULT_BATCH_SIZE,
    show_default=True,
    help="Minibatch size.",
)
@click.option(
    "--schedule",
    default="",
    help="Learning-rate steps, e.g. '10:0.1,20:0.1'.",
    metavar="<ep:mult,...>",
)
@click.option(
    "--resume",
    type=_existing_file,
    help="Checkpoint to continue from.",
    metavar="<ckpt>",
)
@click.option(
    "--dataset",
    type=click.Choice(DATASET_CHOICES),
    help="Dataset; inferred from the input channel count when omitted.",
)
@click.option(
    "--flip/--no-flip",
    default=None,
    help="Horizontal flip augmentation (default: on for CIFAR-10, off for MNIST).",
)
@click.option(
    "--limit", type=click.IntRange(min=1), help="Train on the first N images only."
)
@click.option("-v", "--verbose", is_flag=True, help="Show debug information.")
def train(
    config_path: Path,
    data: Path | None,
    epochs: int,
    seed: int | None,
    out_dir: Path,
    lr: float,
    momentum: float,
    weight_decay: float,
    batch_size: int,
    schedule: str,
    resume: Path | None,
    dataset: str | None,
    flip: bool | None,
    limit: int | None,
    verbose: bool,
) -> None:
    """Train a network, writing train_log.csv and per-epoch checkpoints."""
    try:
        config = TrainConfig(
            config_path=config_path,
            data_dir=_data_dir(data),
            out_dir=out_dir,
            epochs=epochs,
            seed=seed,
            lr=lr,
            momentum=momentum,
            weight_decay=weight_decay,
            batch_size=batch_size,
            schedule=parse_schedule(schedule),
            resume=resume,
            dataset=dataset,  # type: ignore[arg-type]
            flip=flip,
            limit=limit,
            verbose=verbose,
        )
        sys.exit(TrainingWorkflow(config).run())
    except EpinetError as e:
        _fail(e, "Invalid Options", "Check the training flags.")


@main.command(name="eval")
@click.option("--checkpoint", type=_checkpoint_file, required=True, metavar="<ckpt>")
@click.option(
    "--config",
    "config_path",
    type=_existing_file,
    required=True,
    help="Config the checkpoint was trained from.",
    metavar="<path>",
)
@click.option(
    "--data",
    type=click.Path(file_okay=False, path_type=Path),
    help="Dataset directory. Defaults to EPINET_DATA.",
    metavar="<dir>",
)
@click.option(
    "--split", type=click.Choice(("train", "test")), default="test", show_default=True
)
@click.option("--dataset", type=click.Choice(DATASET_CHOICES))
@click.option(
    "--batch", "batch_size", type=click.IntRange(min=1), default=DEFAULT_BATCH_SIZE
)
@click.option(
    "--limit", type=click.IntRange(min=1), help="Evaluate the first N images."
)
@click.option("-v", "--verbose", is_flag=True, help="Show debug information.")
def evaluate(
    checkpoint: Path,
    config_path: Path,
    data: Path | None,
    split: str,
    dataset: str | None,
    batch_size: int,
    limit: int | None,
    verbose: bool,
) -> None:
    """Print the top-1 error of a checkpoint on a split."""
    config = EvalConfig(
        checkpoint=checkpoint,
        config_path=config_path,
        data_dir=_data_dir(data),
        split=split,  # type: ignore[arg-type]
        dataset=dataset,  # type: ignore[arg-type]
        batch_size=batch_size,
        limit=limit,
        verbose=verbose,
    )
    sys.exit(EvaluationWorkflow(config).run())


def _report_rows(reports: list[GradCheckReport]) -> list[tuple[str, ...]]:
    ok, bad = COLORS["success"], COLORS["error"]
    rows = []
    for report in reports:
        for block in report.blocks:
            verdict = f"[{ok}]pass[/{ok}]" if block.passed else f"[{bad}]fail[/{bad}]"
            rows.append(
                (
                    f"{report.name}/{block.block}",
                    str(block.elements),
                    str(block.excluded),
                    f"{block.max_rel_error:.2e}",
                    f"{block.min_margin:.2e}",
                    verdict,
                )
            )
    return rows


@main.command()
@click.option(
    "--config",
    "config_path",
    type=_existing_file,
    help="Check a whole network instead of the built-in layer suite.",
    metavar="<path>",
)
@click.option("--seed", type=int, default=DEFAULT_SEED, show_default=True)
@click.option(
    "--instances",
    type=click.IntRange(min=1),
    default=1,
    show_default=True,
    help="Random instances per layer case.",
)
@click.option(
    "--samples",
    type=click.IntRange(min=1),
    default=20,
    show_default=True,
    help="Elements compared per parameter block with --config.",
)
@click.option(
    "--csv",
    "csv_path",
    type=click.Path(dir_okay=False, path_type=Path),
    help="Also write the report as CSV.",
    metavar="<path>",
)
@click.option("-v", "--verbose", is_flag=True, help="Show debug information.")
def gradcheck(
    config_path: Path | None,
    seed: int,
    instances: int,
    samples: int,
    csv_path: Path | None,
    verbose: bool,
) -> None:
    """Compare every analytic gradient with central differences.

    Exits 0 iff every block passes.
    """
    try:
        with status("Checking gradients..."):
            if config_path is None:
                reports = layer_suite(seed, instances)
            else:
                config = read_network_config(config_path, verbose=verbose)
                rng = np.random.default_rng(seed)
                reports = [
                    check_config(
                        config,
                        rng,
                        max_elements=samples,
                        name=f"{config_path.stem}#{index}",
                    )
                    for index in range(instances)
                ]
        if csv_path is not None:
            write_csv(reports, csv_path)
    except EpinetError as e:
        _fail(e, "Gradient Check Failed", "Check the config or lower --samples.")

    print_table(
        "Gradient check",
        ("block", "elements", "excluded", "max rel. error", "margin", "verdict"),
        _report_rows(reports),
    )
    failed = [report for report in reports if not report.passed]
    if failed:
        for report in failed:
            worst = report.worst_block
            assert worst is not None
            console.print(
                f"{report.name}/{worst.block}: worst element {worst.worst_index} "
                f"analytic {worst.analytic:.6e} numeric {worst.numeric:.6e}"
            )
        sys.exit(1)
    success(f"All {sum(len(report.blocks) for report in reports)} blocks passed")


@main.command(name="export-filters")
@click.option("--checkpoint", type=_checkpoint_file, required=True, metavar="<ckpt>")
@click.option(
    "--config", "config_path", type=_existing_file, required=True, metavar="<path>"
)
@click.option(
    "--layer",
    help="Layer name or 1-based index (default: first epitomic/conv layer).",
    metavar="<layer>",
)
@click.option(
    "--out",
    "out_path",
    type=click.Path(dir_okay=False, path_type=Path),
    required=True,
    metavar="<path>",
)
def export_filters(
    checkpoint: Path, config_path: Path, layer: str | None, out_path: Path
) -> None:
    """Write a layer's epitomes or filters as a tiled PPM image."""
    try:
        config = read_network_config(config_path)
        net, _, _, _ = load_checkpoint(checkpoint, config)
        name, weights = select_layer(net, layer)
        image = filter_grid(weights)
        write_ppm(image, out_path)
    except EpinetError as e:
        _fail(e, "Export Failed", "Pick a layer with epitomes or filters.")
    success(
        f"{weights.shape[0]} tiles of layer '{name}' written to {out_path} "
        f"({image.shape[1]}x{image.shape[0]} px)"
    )


@main.command(name="compare-logs")
@click.argument("log_a", type=_existing_file)
@click.argument("log_b", type=_existing_file)
@click.option("--epoch", type=click.IntRange(min=1), default=5, show_default=True)
def compare_logs_command(log_a: Path, log_b: Path, epoch: int) -> None:
    """Show the validation error of two training runs at one epoch."""
    try:
        first, second = compare_logs(read_log(log_a), read_log(log_b), epoch)
    except EpinetError as e:
        _fail(e, "Comparison Failed", "Check that both runs reached the epoch.")
    print_table(
        f"Validation error at epoch {epoch}",
        ("run", "step", "lr", "train loss", "val error (top-1)"),
        [
            (str(path), str(row.step), f"{row.lr:.4g}", f"{row.train_loss:.4f}",
             f"{row.val_error_top1:.4f}")
            for path, row in ((log_a, first), (log_b, second))
        ],
    )


@main.command()
@click.option("--force", is_flag=True, help="Overwrite an existing configuration file.")
def setup(force: bool) -> None:
    """Copy .env.example to ~/.config/epinet/.env."""
    from epinet.config import run_setup

    sys.exit(run_setup(force=force))


if __name__ == "__main__":
    main()
