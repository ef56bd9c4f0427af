"""Mini-epitome convolution.

An epitome bank holds K parameter images of side V. Every W×W window at a
displacement that is a multiple of the epitome stride is a usable filter, and
overlapping windows share weights. For each input patch the layer keeps the
best-scoring filter of each epitome and records where it was found, so the
backward pass routes gradients through that winner only.

With ``normalize`` set, filters are scored mean-subtracted and divided by their
λ-regularized norm, ``xᵀw̄ / (w̄ᵀw̄ + λ)^½``.

The same kernel serves the topographic variant: the candidate grid is split
into ``pool × pool`` blocks, each yielding one output channel. The mini-epitome
layer is the single-block case.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from epinet.config import DEFAULT_INIT_STD, DEFAULT_LAMBDA, MAX_EPITOME_OFFSET
from epinet.tensor import (
    TensorError,
    check_finite,
    col2im_accumulate,
    im2col,
    matmul,
    output_side,
)
from epinet.utils.types import Tensor


@dataclass
class EpitomeBank:
    """K epitomes of side V plus per-output-channel biases.

    Attributes:
        weights: (K, C, V, V) epitome values.
        biases: Per-output-channel biases, applied by the following ReLU.
        filter_size: Filter side W.
        epitome_stride: Step between candidate displacements.
        normalize: Whether filters are mean+contrast normalized.
        lam: Contrast regularizer λ.
    """

    weights: Tensor
    biases: Tensor
    filter_size: int
    epitome_stride: int = 1
    normalize: bool = False
    lam: float = DEFAULT_LAMBDA

    def __post_init__(self) -> None:
        """Validate the bank geometry.

        Raises:
            TensorError: If the geometry is inconsistent.
        """
        if self.weights.ndim != 4 or self.weights.shape[2] != self.weights.shape[3]:
            raise TensorError(
                f"epitome weights must be (K, C, V, V), got {self.weights.shape}"
            )
        if self.filter_size > self.epitome_size:
            raise TensorError(
                f"filter side {self.filter_size} exceeds epitome side "
                f"{self.epitome_size}"
            )
        if self.epitome_size - self.filter_size > MAX_EPITOME_OFFSET:
            raise TensorError(
                f"epitome side {self.epitome_size} is too large for filter side "
                f"{self.filter_size} (offsets are limited to {MAX_EPITOME_OFFSET})"
            )
        if self.epitome_stride < 1:
            raise TensorError(f"epitome stride must be >= 1, got {self.epitome_stride}")
        if self.lam < 0:
            raise TensorError(f"lambda must be non-negative, got {self.lam}")

    @property
    def count(self) -> int:
        """Return the number of epitomes K."""
        return int(self.weights.shape[0])

    @property
    def channels(self) -> int:
        """Return the number of input channels C."""
        return int(self.weights.shape[1])

    @property
    def epitome_size(self) -> int:
        """Return the epitome side V."""
        return int(self.weights.shape[2])

    @property
    def candidates(self) -> int:
        """Return the candidate displacements per axis n_c."""
        return candidate_count(
            self.epitome_size, self.filter_size, self.epitome_stride
        )


@dataclass(frozen=True)
class ArgmaxMap:
    """Winning displacement for every output element.

    Attributes:
        offsets: (N, C_out, H_out, W_out, 2) uint8 array of (dy, dx).
    """

    offsets: np.ndarray

    @property
    def dy(self) -> np.ndarray:
        """Return the row offsets."""
        return self.offsets[..., 0]

    @property
    def dx(self) -> np.ndarray:
        """Return the column offsets."""
        return self.offsets[..., 1]


def candidate_count(epitome_size: int, filter_size: int, epitome_stride: int) -> int:
    """Candidate displacements per axis, ⌊(V − W)/s_e⌋ + 1."""
    return output_side(epitome_size, filter_size, epitome_stride, layer="epitome")


def init_epitome_bank(
    rng: np.random.Generator,
    count: int,
    channels: int,
    epitome_size: int,
    filter_size: int,
    *,
    epitome_stride: int = 1,
    normalize: bool = False,
    lam: float = DEFAULT_LAMBDA,
    n_biases: int | None = None,
    std: float = DEFAULT_INIT_STD,
    dtype: type = np.float32,
) -> EpitomeBank:
    """Create a bank with Gaussian weights and zero biases.

    Args:
        rng: Generator used for the weights.
        count: Number of epitomes K.
        channels: Input channels C.
        epitome_size: Epitome side V.
        filter_size: Filter side W.
        epitome_stride: Candidate displacement step.
        normalize: Mean+contrast normalization flag.
        lam: Contrast regularizer.
        n_biases: Bias count; defaults to K.
        std: Standard deviation of the weights.
        dtype: Floating dtype of the parameters.

    Returns:
        The initialized bank.
    """
    shape = (count, channels, epitome_size, epitome_size)
    weights = (rng.standard_normal(shape) * std).astype(dtype)
    biases = np.zeros(n_biases if n_biases is not None else count, dtype=dtype)
    return EpitomeBank(
        weights=weights,
        biases=biases,
        filter_size=filter_size,
        epitome_stride=epitome_stride,
        normalize=normalize,
        lam=lam,
    )


def extract_filter(bank: EpitomeBank, k: int, p: tuple[int, int]) -> Tensor:
    """Return the (C, W, W) filter of epitome ``k`` at displacement ``p``.

    The result is a view: overlapping filters alias the same epitome cells.

    Args:
        bank: Epitome bank.
        k: Epitome index.
        p: Displacement (dy, dx).

    Returns:
        View into ``bank.weights``.

    Raises:
        TensorError: If ``k`` or ``p`` is out of range.
    """
    dy, dx = p
    limit = bank.epitome_size - bank.filter_size
    if not 0 <= k < bank.count:
        raise TensorError(f"epitome index {k} out of range [0, {bank.count})")
    for offset in (dy, dx):
        if not 0 <= offset <= limit or offset % bank.epitome_stride:
            raise TensorError(
                f"displacement {p} out of range for V={bank.epitome_size}, "
                f"W={bank.filter_size}, stride {bank.epitome_stride}"
            )
    w = bank.filter_size
    return bank.weights[k, :, dy : dy + w, dx : dx + w]


def pooled_count(candidates: int, pool: int) -> int:
    """Outputs per axis when pooling a candidate grid, ⌊(n_c − P)/P⌋ + 1."""
    return output_side(candidates, pool, pool, layer="epitome pooling")


def _filter_matrix(bank: EpitomeBank) -> tuple[Tensor, Tensor | None, Tensor | None]:
    """Build the (C·W·W, K·n_c²) matrix of every candidate filter.

    Returns:
        (scoring matrix, centered filters or None, contrasts or None).
    """
    candidates = im2col(
        bank.weights, bank.filter_size, bank.epitome_stride, layer="epitome"
    ).data
    if not bank.normalize:
        return candidates.T, None, None
    centered = candidates - candidates.mean(axis=1, keepdims=True)
    contrast = np.sqrt(np.sum(centered * centered, axis=1, keepdims=True) + bank.lam)
    return (centered / contrast).T, centered, contrast


def _score_blocks(
    input: Tensor, bank: EpitomeBank, input_stride: int, pool: int
) -> tuple[Tensor, tuple[int, int, int, int]]:
    """Score every patch against every candidate, grouped by pooling block.

    Returns:
        ((rows, K, n_o, n_o, pool²) scores, (N, H_out, W_out, n_o)).
    """
    if input.ndim != 4 or input.shape[1] != bank.channels:
        raise TensorError(
            f"epitomic: input {input.shape} does not have {bank.channels} channels"
        )
    patches = im2col(input, bank.filter_size, input_stride, layer="epitomic")
    matrix, _, _ = _filter_matrix(bank)
    scores = check_finite(matmul(patches, matrix), "epitomic scores")
    nc = bank.candidates
    no = pooled_count(nc, pool)
    rows = scores.shape[0]
    grid = scores.reshape(rows, bank.count, nc, nc)[:, :, : no * pool, : no * pool]
    blocks = grid.reshape(rows, bank.count, no, pool, no, pool)
    blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(
        rows, bank.count, no, no, pool * pool
    )
    out_h, out_w = patches.grid
    return blocks, (input.shape[0], out_h, out_w, no)


def match(
    input: Tensor, bank: EpitomeBank, input_stride: int, pool: int
) -> tuple[Tensor, ArgmaxMap]:
    """Max-pooled epitomic matching over ``pool × pool`` candidate blocks.

    Ties resolve to the first candidate of the block in row-major order.

    Args:
        input: (N, C, H, W) tensor.
        bank: Epitome bank.
        input_stride: Patch grid stride.
        pool: Side of the pooling blocks over the candidate grid.

    Returns:
        (N, K·n_o², H_out, W_out) responses and their argmax map.
    """
    blocks, (n, out_h, out_w, no) = _score_blocks(input, bank, input_stride, pool)
    winner = blocks.argmax(axis=-1)
    best = np.take_along_axis(blocks, winner[..., None], axis=-1)[..., 0]

    block_y = np.arange(no).reshape(1, 1, no, 1) * pool
    block_x = np.arange(no).reshape(1, 1, 1, no) * pool
    dy = (block_y + winner // pool) * bank.epitome_stride
    dx = (block_x + winner % pool) * bank.epitome_stride
    offsets = np.stack([dy, dx], axis=-1).astype(np.uint8)

    channels = bank.count * no * no
    output = best.reshape(n, out_h, out_w, channels).transpose(0, 3, 1, 2)
    offsets = offsets.reshape(n, out_h, out_w, channels, 2).transpose(0, 3, 1, 2, 4)
    return np.ascontiguousarray(output), ArgmaxMap(np.ascontiguousarray(offsets))


def match_backward(
    grad_out: Tensor,
    input: Tensor,
    bank: EpitomeBank,
    argmax: ArgmaxMap,
    input_stride: int,
    pool: int,
) -> tuple[Tensor, Tensor]:
    """Route upstream gradients through the recorded winners.

    Args:
        grad_out: Gradient with respect to the responses.
        input: Input of the matching forward call.
        bank: Epitome bank of the forward call.
        argmax: Argmax map of the forward call.
        input_stride: Patch grid stride.
        pool: Candidate pooling side.

    Returns:
        (gradient w.r.t. input, gradient w.r.t. epitome weights).

    Raises:
        TensorError: If the argmax map does not belong to this input.
    """
    patches = im2col(input, bank.filter_size, input_stride, layer="epitomic")
    nc = bank.candidates
    no = pooled_count(nc, pool)
    out_h, out_w = patches.grid
    channels = bank.count * no * no
    expected = (input.shape[0], channels, out_h, out_w)
    if argmax.offsets.shape[:4] != expected or grad_out.shape != expected:
        raise TensorError(
            f"epitomic backward: argmax {argmax.offsets.shape[:4]} / grad "
            f"{grad_out.shape} do not match forward output {expected}"
        )
    matrix, centered, contrast = _filter_matrix(bank)
    rows = patches.data.shape[0]

    g = grad_out.transpose(0, 2, 3, 1).reshape(rows, channels)
    offsets = argmax.offsets.transpose(0, 2, 3, 1, 4).reshape(rows, channels, 2)
    cy = offsets[..., 0].astype(np.intp) // bank.epitome_stride
    cx = offsets[..., 1].astype(np.intp) // bank.epitome_stride
    epitome = np.repeat(np.arange(bank.count), no * no)[None, :]
    columns = (epitome * nc + cy) * nc + cx

    dscores = np.zeros((rows, bank.count * nc * nc), dtype=grad_out.dtype)
    np.put_along_axis(dscores, columns, g, axis=1)

    grad_patches = matmul(dscores, matrix.T)
    grad_input = np.zeros_like(input)
    col2im_accumulate(grad_patches, grad_input, bank.filter_size, input_stride)

    grad_filters = matmul(patches.data.T, dscores).T
    if bank.normalize:
        assert centered is not None and contrast is not None
        grad_filters = (
            grad_filters - grad_filters.mean(axis=1, keepdims=True)
        ) / contrast - centered * (
            np.sum(centered * grad_filters, axis=1, keepdims=True) / contrast**3
        )
    grad_weights = np.zeros_like(bank.weights)
    col2im_accumulate(
        np.ascontiguousarray(grad_filters),
        grad_weights,
        bank.filter_size,
        bank.epitome_stride,
    )
    return grad_input, grad_weights


def match_margin(
    input: Tensor, bank: EpitomeBank, input_stride: int, pool: int
) -> float:
    """Smallest gap between a block's winner and its runner-up.

    Returns:
        The gap, or ``inf`` when every block holds a single candidate.
    """
    if pool == 1:
        return float("inf")
    blocks, _ = _score_blocks(input, bank, input_stride, pool)
    top = np.partition(blocks, -2, axis=-1)[..., -2:]
    return float(np.min(top[..., 1] - top[..., 0]))


def epitomic_forward(
    input: Tensor, bank: EpitomeBank, input_stride: int
) -> tuple[Tensor, ArgmaxMap]:
    """Mini-epitome forward pass: one output per epitome and patch.

    Args:
        input: (N, C, H, W) tensor.
        bank: Epitome bank.
        input_stride: Patch grid stride.

    Returns:
        (N, K, H_out, W_out) responses and their argmax map.
    """
    return match(input, bank, input_stride, bank.candidates)


def epitomic_backward(
    grad_out: Tensor,
    input: Tensor,
    bank: EpitomeBank,
    argmax: ArgmaxMap,
    input_stride: int,
) -> tuple[Tensor, Tensor]:
    """Mini-epitome backward pass.

    Returns:
        (gradient w.r.t. input, gradient w.r.t. epitome weights).
    """
    return match_backward(
        grad_out, input, bank, argmax, input_stride, bank.candidates
    )


def epitomic_margin(input: Tensor, bank: EpitomeBank, input_stride: int) -> float:
    """Winner/runner-up gap of a mini-epitome forward pass."""
    return match_margin(input, bank, input_stride, bank.candidates)
