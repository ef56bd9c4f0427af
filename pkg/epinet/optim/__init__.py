"""Optimization for epinet."""

from __future__ import annotations

from epinet.optim.sgd import (
    OptimError,
    ParamGroup,
    Sgd,
    SgdConfig,
    apply_schedule,
    parse_schedule,
    sgd_step,
)

__all__ = [
    "OptimError",
    "ParamGroup",
    "Sgd",
    "SgdConfig",
    "apply_schedule",
    "parse_schedule",
    "sgd_step",
]
