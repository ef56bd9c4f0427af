"""Dense tensor primitives for epinet."""

from __future__ import annotations

from epinet.tensor.core import (
    EpinetError,
    InnerProductCounter,
    PatchMatrix,
    TensorError,
    check_finite,
    col2im_accumulate,
    im2col,
    inner_product_counter,
    matmul,
    output_side,
)

__all__ = [
    "EpinetError",
    "InnerProductCounter",
    "PatchMatrix",
    "TensorError",
    "check_finite",
    "col2im_accumulate",
    "im2col",
    "inner_product_counter",
    "matmul",
    "output_side",
]
