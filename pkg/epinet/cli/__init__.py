"""CLI package for epinet."""

from epinet.cli.cli import main
from epinet.cli.workflow import EvaluationWorkflow, TrainingWorkflow

__all__ = [
    "main",
    "EvaluationWorkflow",
    "TrainingWorkflow",
]
