"""Finite-difference gradient checking."""

from __future__ import annotations

from epinet.gradcheck.checker import (
    CSV_COLUMNS,
    BlockReport,
    GradCheckError,
    GradCheckReport,
    check_op,
    margin_guarded,
    relative_error,
    write_csv,
)
from epinet.gradcheck.suite import (
    StackCase,
    check_case,
    check_config,
    check_network,
    layer_suite,
)

__all__ = [
    "CSV_COLUMNS",
    "BlockReport",
    "GradCheckError",
    "GradCheckReport",
    "StackCase",
    "check_case",
    "check_config",
    "check_network",
    "check_op",
    "layer_suite",
    "margin_guarded",
    "relative_error",
    "write_csv",
]
