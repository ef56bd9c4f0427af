"""Terminal output helpers and shared types for epinet."""

from epinet.utils.formatting import (
    console,
    debug_header,
    debug_item,
    debug_json,
    print_error,
    print_table,
    status,
    success,
    warning,
)
from epinet.utils.types import (
    ChwShape,
    DatasetName,
    EvalConfig,
    LayerType,
    Mode,
    Shape,
    Split,
    Tensor,
    TrainConfig,
)

__all__ = [
    "console",
    "debug_header",
    "debug_item",
    "debug_json",
    "print_error",
    "print_table",
    "status",
    "success",
    "warning",
    "ChwShape",
    "DatasetName",
    "EvalConfig",
    "LayerType",
    "Mode",
    "Shape",
    "Split",
    "Tensor",
    "TrainConfig",
]
