"""Tests for epinet.cli.cli module."""

from __future__ import annotations

import unittest
from pathlib import Path
from unittest.mock import MagicMock, patch

import numpy as np
import pytest
from click.testing import CliRunner

from epinet import __version__
from epinet.cli.cli import main
from epinet.data import Dataset, encode_idx
from epinet.gradcheck import BlockReport, GradCheckReport

TINY_MNIST = """\
[net]
input = 1x28x28
classes = 10
seed = 3

[layer e1]
type = epitomic
epitomes = 4
epitome = 6
filter = 4
stride = 4

[layer r1]
type = relu

[layer fc]
type = fc
channels = 10

[layer out]
type = softmax
"""


def write_mnist(directory: Path, train: int = 40, test: int = 20) -> None:
    """Write a small random MNIST lookalike in IDX format."""
    rng = np.random.default_rng(11)
    for prefix, count in (("train", train), ("t10k", test)):
        pixels = rng.integers(0, 256, size=(count, 1, 28, 28)) / 255
        labels = rng.integers(0, 10, count)
        ds = Dataset(images=pixels.astype(np.float32), labels=labels)
        image_bytes, label_bytes = encode_idx(ds)
        (directory / f"{prefix}-images-idx3-ubyte").write_bytes(image_bytes)
        (directory / f"{prefix}-labels-idx1-ubyte").write_bytes(label_bytes)


def _failing_report() -> GradCheckReport:
    block = BlockReport(
        block="e.weights",
        elements=4,
        excluded=0,
        max_rel_error=0.5,
        worst_index=(0, 0, 1, 1),
        analytic=1.0,
        numeric=2.0,
        min_margin=1.0,
        passed=False,
    )
    return GradCheckReport(name="epitomic", blocks=[block])


class TestCli(unittest.TestCase):
    """Tests for the CLI entry point."""

    def setUp(self):
        """Set up test fixtures."""
        self.runner = CliRunner()

    def test_cli_version(self) -> None:
        """--version prints the package version."""
        result = self.runner.invoke(main, ["--version"])
        self.assertEqual(result.exit_code, 0)
        self.assertIn(__version__, result.output)

    def test_cli_help_lists_commands(self) -> None:
        """Every subcommand is listed in the help."""
        result = self.runner.invoke(main, ["--help"])
        self.assertEqual(result.exit_code, 0)
        for command in ("train", "eval", "gradcheck", "export-filters", "compare-logs"):
            self.assertIn(command, result.output)

    def test_cli_unknown_flag(self) -> None:
        """Flag parse errors exit with status 2."""
        result = self.runner.invoke(main, ["gradcheck", "--bogus"])
        self.assertEqual(result.exit_code, 2)

    def test_cli_train_requires_epochs(self) -> None:
        """Missing required options are usage errors."""
        with self.runner.isolated_filesystem():
            Path("tiny.net").write_text(TINY_MNIST, encoding="utf-8")
            result = self.runner.invoke(
                main, ["train", "--config", "tiny.net", "--data", ".", "--out", "run"]
            )
        self.assertEqual(result.exit_code, 2)
        self.assertIn("--epochs", result.output)

    def test_cli_train_bad_schedule(self) -> None:
        """A malformed schedule is reported and exits 1."""
        with self.runner.isolated_filesystem():
            Path("tiny.net").write_text(TINY_MNIST, encoding="utf-8")
            result = self.runner.invoke(
                main,
                [
                    "train", "--config", "tiny.net", "--data", ".", "--out", "run",
                    "--epochs", "1", "--schedule", "ten:0.1",
                ],
            )
        self.assertEqual(result.exit_code, 1)

    @patch("epinet.cli.cli.DEFAULT_DATA_DIR", "")
    def test_cli_eval_needs_data_dir(self) -> None:
        """Without --data or EPINET_DATA the command is a usage error."""
        with self.runner.isolated_filesystem():
            Path("tiny.net").write_text(TINY_MNIST, encoding="utf-8")
            result = self.runner.invoke(
                main, ["eval", "--checkpoint", "x.ckpt", "--config", "tiny.net"]
            )
        self.assertEqual(result.exit_code, 2)
        self.assertIn("EPINET_DATA", result.output)

    def test_cli_eval_missing_checkpoint(self) -> None:
        """An unreadable checkpoint exits 1 with an error panel."""
        with self.runner.isolated_filesystem():
            Path("tiny.net").write_text(TINY_MNIST, encoding="utf-8")
            result = self.runner.invoke(
                main,
                ["eval", "--checkpoint", "missing.ckpt", "--config", "tiny.net",
                 "--data", "."],
            )
        self.assertEqual(result.exit_code, 1)
        self.assertIn("Evaluation Failed", result.output)

    @patch("epinet.cli.cli.layer_suite")
    def test_cli_gradcheck_failure_exits_1(self, mock_suite: MagicMock) -> None:
        """A failing block names the worst element and exits 1."""
        mock_suite.return_value = [_failing_report()]
        result = self.runner.invoke(main, ["gradcheck"])
        self.assertEqual(result.exit_code, 1)
        self.assertIn("epitomic/e.weights", result.output)
        self.assertIn("(0, 0, 1, 1)", result.output)

    def test_cli_gradcheck_config_csv(self) -> None:
        """Checking a config writes a CSV with one row per block."""
        with self.runner.isolated_filesystem():
            Path("tiny.net").write_text(TINY_MNIST, encoding="utf-8")
            result = self.runner.invoke(
                main,
                ["gradcheck", "--config", "tiny.net", "--samples", "3",
                 "--csv", "report.csv"],
            )
            lines = Path("report.csv").read_text(encoding="utf-8").splitlines()
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertTrue(lines[0].startswith("block,elements,excluded,max_rel_error"))
        self.assertEqual(
            [line.split(",")[0] for line in lines[1:]],
            ["tiny#0/e1.weights", "tiny#0/e1.biases", "tiny#0/fc.weights",
             "tiny#0/fc.biases"],
        )

    def test_cli_compare_logs(self) -> None:
        """compare-logs prints both runs at the requested epoch."""
        header = "epoch,step,lr,train_loss,val_error_top1\n"
        with self.runner.isolated_filesystem():
            Path("a.csv").write_text(header + "1,10,0.01,2.0,0.5\n", encoding="utf-8")
            Path("b.csv").write_text(header + "1,10,0.01,1.5,0.25\n", encoding="utf-8")
            result = self.runner.invoke(
                main, ["compare-logs", "a.csv", "b.csv", "--epoch", "1"]
            )
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertIn("0.5000", result.output)
        self.assertIn("0.2500", result.output)

    def test_cli_compare_logs_short_run(self) -> None:
        """A log that never reached the epoch exits 1."""
        header = "epoch,step,lr,train_loss,val_error_top1\n"
        with self.runner.isolated_filesystem():
            Path("a.csv").write_text(header + "1,10,0.01,2.0,0.5\n", encoding="utf-8")
            result = self.runner.invoke(main, ["compare-logs", "a.csv", "a.csv"])
        self.assertEqual(result.exit_code, 1)
        self.assertIn("Comparison Failed", result.output)

    @patch("epinet.config.run_setup")
    def test_cli_setup(self, mock_setup: MagicMock) -> None:
        """setup forwards --force and its exit code."""
        mock_setup.return_value = 0
        result = self.runner.invoke(main, ["setup", "--force"])
        self.assertEqual(result.exit_code, 0)
        mock_setup.assert_called_once_with(force=True)


class TestTrainEval:
    """End-to-end runs on a synthetic MNIST directory."""

    @pytest.fixture
    def workspace(self, tmp_path: Path) -> Path:
        write_mnist(tmp_path)
        (tmp_path / "tiny.net").write_text(TINY_MNIST, encoding="utf-8")
        return tmp_path

    def _train(self, workspace: Path, *extra: str) -> object:
        return CliRunner().invoke(
            main,
            [
                "train", "--config", str(workspace / "tiny.net"),
                "--data", str(workspace), "--out", str(workspace / "run"),
                "--epochs", "2", "--batch", "16", *extra,
            ],
        )

    def test_train__writes_log_and_checkpoints(self, workspace: Path) -> None:
        """Training logs every epoch and checkpoints each one."""
        result = self._train(workspace)
        assert result.exit_code == 0, result.output

        run = workspace / "run"
        lines = (run / "train_log.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "epoch,step,lr,train_loss,val_error_top1"
        assert [line.split(",")[:2] for line in lines[1:]] == [["1", "3"], ["2", "6"]]
        for name in ("epoch_001.ckpt", "epoch_002.ckpt", "final.ckpt"):
            assert (run / name).is_file()

    def test_eval__reproduces_logged_error(self, workspace: Path) -> None:
        """eval of final.ckpt prints exactly the last logged validation error."""
        assert self._train(workspace).exit_code == 0
        result = CliRunner().invoke(
            main,
            [
                "eval", "--checkpoint", str(workspace / "run" / "final.ckpt"),
                "--config", str(workspace / "tiny.net"), "--data", str(workspace),
                "--batch", "16",
            ],
        )
        assert result.exit_code == 0, result.output
        assert "top-1 error on test (20 images, epoch 2)" in result.output
        log = (workspace / "run" / "train_log.csv").read_text(encoding="utf-8")
        logged = log.splitlines()[-1].split(",")[-1]
        assert result.output.strip().split()[-1] == logged

    def test_eval__fingerprint_mismatch(self, workspace: Path) -> None:
        """A checkpoint evaluated under a different config is rejected."""
        assert self._train(workspace).exit_code == 0
        other = workspace / "other.net"
        other.write_text(TINY_MNIST.replace("epitomes = 4", "epitomes = 5"), "utf-8")
        result = CliRunner().invoke(
            main,
            [
                "eval", "--checkpoint", str(workspace / "run" / "final.ckpt"),
                "--config", str(other), "--data", str(workspace),
            ],
        )
        assert result.exit_code == 1
        assert "fingerprint" in result.output

    def test_export_filters__writes_ppm(self, workspace: Path) -> None:
        """Four 6x6 epitomes tile a 15x15 image."""
        assert self._train(workspace).exit_code == 0
        out = workspace / "filters.ppm"
        result = CliRunner().invoke(
            main,
            [
                "export-filters", "--checkpoint", str(workspace / "run" / "final.ckpt"),
                "--config", str(workspace / "tiny.net"), "--out", str(out),
            ],
        )
        assert result.exit_code == 0, result.output
        data = out.read_bytes()
        assert data.startswith(b"P6\n15 15\n255\n")
        assert len(data) == len(b"P6\n15 15\n255\n") + 15 * 15 * 3

    def test_export_filters__layer_without_filters(self, workspace: Path) -> None:
        """Asking for a ReLU fails with exit code 1."""
        assert self._train(workspace).exit_code == 0
        result = CliRunner().invoke(
            main,
            [
                "export-filters", "--checkpoint", str(workspace / "run" / "final.ckpt"),
                "--config", str(workspace / "tiny.net"), "--layer", "r1",
                "--out", str(workspace / "x.ppm"),
            ],
        )
        assert result.exit_code == 1
        assert "Export Failed" in result.output
