"""Topographic epitomes: several outputs per large epitome.

The candidate grid of each epitome is max-pooled in non-overlapping
``epit_pool × epit_pool`` blocks. Each block is an output channel, so channels
of the same epitome have overlapping winning filters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from epinet.config import DEFAULT_INIT_STD, DEFAULT_LAMBDA
from epinet.layers.epitomic import (
    ArgmaxMap,
    EpitomeBank,
    candidate_count,
    init_epitome_bank,
    match,
    match_backward,
    match_margin,
    pooled_count,
)
from epinet.tensor import TensorError
from epinet.utils.types import Tensor


@dataclass
class TopographicBank(EpitomeBank):
    """Epitome bank whose candidate grid is pooled into several outputs.

    Attributes:
        epit_pool: Pooling side P_e over the candidate grid (stride P_e).
    """

    epit_pool: int = 1

    def __post_init__(self) -> None:
        """Validate the pooling geometry.

        Raises:
            TensorError: If the pool does not fit the candidate grid.
        """
        super().__post_init__()
        if self.epit_pool < 1 or self.epit_pool > self.candidates:
            raise TensorError(
                f"epitome pool {self.epit_pool} does not fit {self.candidates} "
                "candidates per axis"
            )

    @property
    def outputs_per_axis(self) -> int:
        """Return n_o, the outputs per epitome per axis."""
        return pooled_count(self.candidates, self.epit_pool)

    @property
    def out_channels(self) -> int:
        """Return K·n_o², the total output channel count."""
        return self.count * self.outputs_per_axis**2


def topographic_channels(
    count: int, epitome_size: int, filter_size: int, epitome_stride: int, pool: int
) -> int:
    """Output channels of a topographic layer, K·n_o²."""
    nc = candidate_count(epitome_size, filter_size, epitome_stride)
    return count * pooled_count(nc, pool) ** 2


def init_topographic_bank(
    rng: np.random.Generator,
    count: int,
    channels: int,
    epitome_size: int,
    filter_size: int,
    epit_pool: int,
    *,
    epitome_stride: int = 1,
    normalize: bool = True,
    lam: float = DEFAULT_LAMBDA,
    std: float = DEFAULT_INIT_STD,
    dtype: type = np.float32,
) -> TopographicBank:
    """Create a topographic bank with one bias per output channel.

    Returns:
        The initialized bank.
    """
    n_out = topographic_channels(
        count, epitome_size, filter_size, epitome_stride, epit_pool
    )
    base = init_epitome_bank(
        rng,
        count,
        channels,
        epitome_size,
        filter_size,
        epitome_stride=epitome_stride,
        normalize=normalize,
        lam=lam,
        n_biases=n_out,
        std=std,
        dtype=dtype,
    )
    return TopographicBank(
        weights=base.weights,
        biases=base.biases,
        filter_size=filter_size,
        epitome_stride=epitome_stride,
        normalize=normalize,
        lam=lam,
        epit_pool=epit_pool,
    )


def topographic_forward(
    input: Tensor, bank: TopographicBank, input_stride: int
) -> tuple[Tensor, ArgmaxMap]:
    """Topographic forward pass.

    Channel (k, a, b) holds the best score of block (a, b) of epitome k;
    channels are epitome-major, then row-major over blocks.

    Returns:
        (N, K·n_o², H_out, W_out) responses and their argmax map.
    """
    return match(input, bank, input_stride, bank.epit_pool)


def topographic_backward(
    grad_out: Tensor,
    input: Tensor,
    bank: TopographicBank,
    argmax: ArgmaxMap,
    input_stride: int,
) -> tuple[Tensor, Tensor]:
    """Topographic backward pass; shared epitome cells sum over all blocks.

    Returns:
        (gradient w.r.t. input, gradient w.r.t. epitome weights).
    """
    return match_backward(grad_out, input, bank, argmax, input_stride, bank.epit_pool)


def topographic_margin(
    input: Tensor, bank: TopographicBank, input_stride: int
) -> float:
    """Winner/runner-up gap of a topographic forward pass."""
    return match_margin(input, bank, input_stride, bank.epit_pool)
