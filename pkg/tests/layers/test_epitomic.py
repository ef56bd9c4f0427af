"""Tests for epinet.layers.epitomic."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from epinet.layers.conv import ConvBank, conv_forward
from epinet.layers.epitomic import (
    EpitomeBank,
    candidate_count,
    epitomic_backward,
    epitomic_forward,
    epitomic_margin,
    extract_filter,
    init_epitome_bank,
)
from epinet.layers.pooling import maxpool_forward
from epinet.tensor import TensorError, im2col, inner_product_counter


def _bank(weights: np.ndarray, filter_size: int, **kwargs: object) -> EpitomeBank:
    return EpitomeBank(
        weights=weights,
        biases=np.zeros(weights.shape[0], dtype=weights.dtype),
        filter_size=filter_size,
        **kwargs,  # type: ignore[arg-type]
    )


@pytest.fixture
def worked_example() -> tuple[np.ndarray, EpitomeBank]:
    """A 2×2 input against one 3×3 epitome holding 1..9."""
    x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
    epitome = np.arange(1.0, 10.0).reshape(1, 1, 3, 3)
    return x, _bank(epitome, 2)


class TestEpitomeBank:
    """Tests for bank validation and filter extraction."""

    def test_bank__filter_larger_than_epitome(self) -> None:
        """Reject W > V."""
        with pytest.raises(TensorError, match="exceeds epitome side"):
            _bank(np.zeros((1, 1, 3, 3)), 4)

    def test_bank__offsets_must_fit_in_a_byte(self) -> None:
        """Reject V − W above the argmax storage range."""
        with pytest.raises(TensorError, match="too large"):
            _bank(np.zeros((1, 1, 258, 258)), 2)

    def test_bank__negative_lambda(self) -> None:
        """Reject λ < 0."""
        with pytest.raises(TensorError, match="lambda"):
            _bank(np.zeros((1, 1, 3, 3)), 2, lam=-1.0)

    @pytest.mark.parametrize(
        ("epitome", "filter_size", "stride", "expected"),
        [(3, 2, 1, 2), (12, 8, 2, 3), (36, 8, 2, 15), (26, 6, 1, 21), (4, 4, 1, 1)],
    )
    def test_candidate_count(
        self, epitome: int, filter_size: int, stride: int, expected: int
    ) -> None:
        """n_c = ⌊(V − W)/s_e⌋ + 1."""
        assert candidate_count(epitome, filter_size, stride) == expected

    def test_extract_filter__is_a_view(
        self, worked_example: tuple[np.ndarray, EpitomeBank]
    ) -> None:
        """Filters alias the epitome cells."""
        _, bank = worked_example
        window = extract_filter(bank, 0, (1, 1))

        np.testing.assert_array_equal(window[0], [[5, 6], [8, 9]])
        assert np.shares_memory(window, bank.weights)

    @pytest.mark.parametrize("p", [(2, 0), (0, -1)])
    def test_extract_filter__out_of_range(
        self, worked_example: tuple[np.ndarray, EpitomeBank], p: tuple[int, int]
    ) -> None:
        """Displacements must keep the window inside the epitome."""
        _, bank = worked_example
        with pytest.raises(TensorError, match="out of range"):
            extract_filter(bank, 0, p)

    def test_extract_filter__respects_epitome_stride(self) -> None:
        """Only multiples of the epitome stride are valid displacements."""
        bank = _bank(np.zeros((1, 1, 5, 5)), 3, epitome_stride=2)
        extract_filter(bank, 0, (2, 0))
        with pytest.raises(TensorError):
            extract_filter(bank, 0, (1, 0))

    def test_init__shapes_and_zero_biases(self) -> None:
        """Initialization draws (K, C, V, V) weights and K zero biases."""
        bank = init_epitome_bank(np.random.default_rng(0), 4, 3, 6, 4)
        assert bank.weights.shape == (4, 3, 6, 6)
        assert bank.weights.dtype == np.float32
        np.testing.assert_array_equal(bank.biases, np.zeros(4))
        assert bank.candidates == 3


class TestEpitomicForward:
    """Tests for epitomic_forward."""

    def test_forward__worked_example(
        self, worked_example: tuple[np.ndarray, EpitomeBank]
    ) -> None:
        """The best of scores {37, 47, 67, 77} wins at (1, 1)."""
        x, bank = worked_example
        out, argmax = epitomic_forward(x, bank, 1)

        assert out.shape == (1, 1, 1, 1)
        assert out[0, 0, 0, 0] == 77.0
        assert (int(argmax.dy[0, 0, 0, 0]), int(argmax.dx[0, 0, 0, 0])) == (1, 1)
        assert argmax.offsets.dtype == np.uint8

    def test_forward__single_filter_is_squared_norm(self) -> None:
        """With V == W and x == w the response is ‖w‖²."""
        w = np.random.default_rng(3).standard_normal((1, 2, 3, 3))
        out, argmax = epitomic_forward(w.copy(), _bank(w, 3), 1)

        assert out[0, 0, 0, 0] == pytest.approx(np.sum(w * w), rel=1e-14)
        assert argmax.offsets.max() == 0

    def test_forward__ties_pick_first_displacement(self) -> None:
        """Equal scores resolve to the smallest row-major displacement."""
        x = np.ones((1, 1, 2, 2))
        out, argmax = epitomic_forward(x, _bank(np.ones((1, 1, 4, 4)), 2), 1)

        assert out[0, 0, 0, 0] == 4.0
        assert argmax.offsets[0, 0, 0, 0].tolist() == [0, 0]

    def test_forward__output_geometry(self) -> None:
        """A 3×220×220 input with K=96, V=12, W=8, stride 4 yields 96×54×54."""
        rng = np.random.default_rng(0)
        bank = init_epitome_bank(rng, 96, 3, 12, 8, epitome_stride=2)
        x = rng.standard_normal((1, 3, 220, 220)).astype(np.float32)

        out, argmax = epitomic_forward(x, bank, 4)

        assert out.shape == (1, 96, 54, 54)
        assert bank.candidates**2 == 9
        assert set(np.unique(argmax.offsets).tolist()) <= {0, 2, 4}

    @pytest.mark.parametrize("seed", range(200))
    def test_forward__matches_maxout_oracle(self, seed: int) -> None:
        """Each output is the max of independently scored candidate filters."""
        rng = np.random.default_rng(seed)
        count, channels = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        filter_size = int(rng.integers(1, 6))
        epitome = int(rng.integers(filter_size, 9))
        epitome_stride, stride = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        normalize = bool(rng.integers(2))
        bank = init_epitome_bank(
            rng,
            count,
            channels,
            epitome,
            filter_size,
            epitome_stride=epitome_stride,
            normalize=normalize,
            std=1.0,
            dtype=np.float64,
        )
        side = filter_size + int(rng.integers(0, 5))
        x = rng.standard_normal((2, channels, side, side))

        out, argmax = epitomic_forward(x, bank, stride)

        steps = range(0, epitome - filter_size + 1, epitome_stride)
        displacements = list(itertools.product(steps, repeat=2))
        filters = np.array(
            [[extract_filter(bank, k, p) for p in displacements] for k in range(count)]
        )
        if normalize:
            centered = filters - filters.mean(axis=(2, 3, 4), keepdims=True)
            norms = np.sum(centered**2, axis=(2, 3, 4), keepdims=True) + bank.lam
            filters = centered / np.sqrt(norms)
        rows = (side - filter_size) // stride + 1
        assert out.shape == (2, count, rows, rows)
        for n, i, j in itertools.product(range(2), range(rows), range(rows)):
            y, z = i * stride, j * stride
            patch = x[n, :, y : y + filter_size, z : z + filter_size]
            scores = np.einsum("cuv,kpcuv->kp", patch, filters)
            best = scores.argmax(axis=1)
            np.testing.assert_allclose(
                out[n, :, i, j], scores.max(axis=1), rtol=1e-12, atol=1e-12
            )
            expected = [displacements[b] for b in best]
            assert [tuple(o) for o in argmax.offsets[n, :, i, j].tolist()] == expected

    def test_forward__degenerates_to_convolution(self) -> None:
        """V == W gives exactly the strided convolution."""
        rng = np.random.default_rng(5)
        weights = rng.standard_normal((4, 3, 5, 5))
        x = rng.standard_normal((2, 3, 13, 13))

        out, _ = epitomic_forward(x, _bank(weights, 5), 2)
        conv = conv_forward(x, ConvBank(weights=weights, biases=np.zeros(4), stride=2))

        np.testing.assert_array_equal(out, conv)

    def test_forward__channel_mismatch(
        self, worked_example: tuple[np.ndarray, EpitomeBank]
    ) -> None:
        """Reject inputs with the wrong channel count."""
        _, bank = worked_example
        with pytest.raises(TensorError, match="channels"):
            epitomic_forward(np.zeros((1, 2, 4, 4)), bank, 1)

    def test_forward__input_smaller_than_filter(
        self, worked_example: tuple[np.ndarray, EpitomeBank]
    ) -> None:
        """Reject inputs smaller than the filter."""
        _, bank = worked_example
        with pytest.raises(TensorError, match="does not fit"):
            epitomic_forward(np.zeros((1, 1, 1, 1)), bank, 1)

    def test_margin__gap_between_best_two(
        self, worked_example: tuple[np.ndarray, EpitomeBank]
    ) -> None:
        """The margin of the worked example is 77 − 67."""
        x, bank = worked_example
        assert epitomic_margin(x, bank, 1) == 10.0


class TestNormalizedMatching:
    """Tests for the mean+contrast normalized score."""

    def test_normalized__hand_computed_response(self) -> None:
        """w = [3, −1], x = [1, 0], λ = 0.01 gives 2/√8.01."""
        weights = np.array([3.0, -1.0]).reshape(1, 2, 1, 1)
        x = np.array([1.0, 0.0]).reshape(1, 2, 1, 1)
        out, _ = epitomic_forward(x, _bank(weights, 1, normalize=True, lam=0.01), 1)

        assert out[0, 0, 0, 0] == pytest.approx(2 / np.sqrt(8.01), rel=1e-12)
        assert out[0, 0, 0, 0] == pytest.approx(0.70666, abs=1e-5)

    def test_normalized__constant_filter_responds_zero(self) -> None:
        """A constant filter has zero mean-subtracted part."""
        x = np.random.default_rng(0).standard_normal((1, 2, 3, 3))
        bank = _bank(np.full((1, 2, 3, 3), 2.5), 3, normalize=True)
        out, _ = epitomic_forward(x, bank, 1)

        assert out[0, 0, 0, 0] == 0.0

    def test_normalized__mean_shift_invariance(self) -> None:
        """A constant epitome shift keeps argmaxes exactly and outputs to 1e-12."""
        rng = np.random.default_rng(21)
        for _ in range(100):
            weights = rng.standard_normal((2, 2, 5, 5))
            x = rng.standard_normal((1, 2, 6, 6))
            shifted = weights + np.array([4.0, -0.5]).reshape(2, 1, 1, 1)

            out, argmax = epitomic_forward(x, _bank(weights, 3, normalize=True), 1)
            out_s, argmax_s = epitomic_forward(x, _bank(shifted, 3, normalize=True), 1)

            np.testing.assert_allclose(out_s, out, rtol=1e-12, atol=1e-12)
            np.testing.assert_array_equal(argmax_s.offsets, argmax.offsets)

    def test_normalized__scale_invariance_without_lambda(self) -> None:
        """With λ = 0 a power-of-two scale leaves the outputs bit-identical."""
        rng = np.random.default_rng(8)
        weights = rng.standard_normal((3, 1, 5, 5))
        x = rng.standard_normal((2, 1, 7, 7))

        out, argmax = epitomic_forward(x, _bank(weights, 3, normalize=True, lam=0.0), 2)
        out_s, argmax_s = epitomic_forward(
            x, _bank(weights * 8.0, 3, normalize=True, lam=0.0), 2
        )

        np.testing.assert_array_equal(out_s, out)
        np.testing.assert_array_equal(argmax_s.offsets, argmax.offsets)


class TestEpitomicBackward:
    """Tests for epitomic_backward."""

    def test_backward__worked_example(
        self, worked_example: tuple[np.ndarray, EpitomeBank]
    ) -> None:
        """Unit upstream gradient scatters x into the winning window."""
        x, bank = worked_example
        _, argmax = epitomic_forward(x, bank, 1)

        grad_input, grad_weights = epitomic_backward(
            np.ones((1, 1, 1, 1)), x, bank, argmax, 1
        )

        np.testing.assert_array_equal(
            grad_weights[0, 0], [[0, 0, 0], [0, 1, 2], [0, 3, 4]]
        )
        np.testing.assert_array_equal(grad_input[0, 0], [[5, 6], [8, 9]])

    def test_backward__zero_upstream(self) -> None:
        """Zero upstream gradient gives zero gradients."""
        rng = np.random.default_rng(1)
        bank = init_epitome_bank(rng, 2, 2, 5, 3, dtype=np.float64)
        x = rng.standard_normal((1, 2, 6, 6))
        out, argmax = epitomic_forward(x, bank, 1)

        grad_input, grad_weights = epitomic_backward(
            np.zeros_like(out), x, bank, argmax, 1
        )

        assert not grad_input.any()
        assert not grad_weights.any()

    def test_backward__overlapping_windows_sum(self) -> None:
        """Two sites whose winners overlap add into the shared cells."""
        bank = _bank(np.array([[[[0.0, 1.0], [2.0, 5.0]]]]), 1)
        # both sites are positive, so both pick the largest cell
        x = np.array([[[[1.0, 3.0]]]])
        out, argmax = epitomic_forward(x, bank, 1)

        _, grad_weights = epitomic_backward(np.ones_like(out), x, bank, argmax, 1)

        assert argmax.offsets.reshape(-1, 2).tolist() == [[1, 1], [1, 1]]
        np.testing.assert_array_equal(grad_weights[0, 0], [[0.0, 0.0], [0.0, 4.0]])

    def test_backward__gradient_stays_inside_winning_window(self) -> None:
        """A single site and channel touches only its W×W×C window."""
        rng = np.random.default_rng(4)
        bank = init_epitome_bank(rng, 2, 3, 7, 3, std=1.0, dtype=np.float64)
        x = rng.standard_normal((1, 3, 3, 3))
        out, argmax = epitomic_forward(x, bank, 1)
        grad = np.zeros_like(out)
        grad[0, 1] = 1.0

        _, grad_weights = epitomic_backward(grad, x, bank, argmax, 1)

        dy, dx = argmax.offsets[0, 1, 0, 0].tolist()
        mask = np.zeros_like(grad_weights, dtype=bool)
        mask[1, :, dy : dy + 3, dx : dx + 3] = True
        assert not grad_weights[~mask].any()
        np.testing.assert_array_equal(grad_weights[mask].reshape(3, 3, 3), x[0])

    def test_backward__normalized_matches_closed_form(self) -> None:
        """∂r/∂w = (x − mean x)/n − r·w̄/n² for a single candidate."""
        rng = np.random.default_rng(2)
        w = rng.standard_normal((1, 2, 2, 2))
        x = rng.standard_normal((1, 2, 2, 2))
        bank = _bank(w, 2, normalize=True, lam=0.01)
        out, argmax = epitomic_forward(x, bank, 1)

        grad_input, grad_weights = epitomic_backward(
            np.ones_like(out), x, bank, argmax, 1
        )

        centered = w - w.mean()
        norm = np.sqrt(np.sum(centered * centered) + 0.01)
        r = out[0, 0, 0, 0]
        np.testing.assert_allclose(
            grad_weights, (x - x.mean()) / norm - r * centered / norm**2, rtol=1e-10
        )
        np.testing.assert_allclose(grad_input, centered / norm, rtol=1e-12)

    def test_backward__rejects_foreign_argmax(
        self, worked_example: tuple[np.ndarray, EpitomeBank]
    ) -> None:
        """An argmax map from another input shape is rejected."""
        x, bank = worked_example
        big = np.ones((1, 1, 3, 3))
        _, argmax = epitomic_forward(big, bank, 1)
        with pytest.raises(TensorError, match="do not match"):
            epitomic_backward(np.ones((1, 1, 1, 1)), x, bank, argmax, 1)


def test_cost_parity_with_conv_and_maxpool() -> None:
    """Epitomic matching costs n_c²·W²·C products per output, as conv + pool."""
    rng = np.random.default_rng(0)
    count, channels, epitome, filter_size = 4, 3, 8, 5
    bank = init_epitome_bank(rng, count, channels, epitome, filter_size)
    nc = bank.candidates
    x = rng.standard_normal((1, channels, epitome, epitome)).astype(np.float32)

    with inner_product_counter() as epitomic:
        out, _ = epitomic_forward(x, bank, 1)
    conv_bank = ConvBank(
        weights=bank.weights[:, :, :filter_size, :filter_size].copy(),
        biases=bank.biases,
    )
    with inner_product_counter() as baseline:
        pooled, _ = maxpool_forward(conv_forward(x, conv_bank), nc, nc)

    assert out.shape == pooled.shape == (1, count, 1, 1)
    expected = out.size * nc * nc * filter_size**2 * channels
    assert epitomic.macs == baseline.macs == expected


def test_cost_per_output_on_a_larger_grid() -> None:
    """The per-output cost holds for multi-site, strided inputs."""
    rng = np.random.default_rng(0)
    bank = init_epitome_bank(rng, 5, 2, 10, 6, epitome_stride=2)
    x = rng.standard_normal((3, 2, 17, 17)).astype(np.float32)

    with inner_product_counter() as counter:
        out, _ = epitomic_forward(x, bank, 3)

    assert im2col(x, 6, 3).grid == out.shape[2:]
    assert counter.macs == out.size * bank.candidates**2 * 6 * 6 * 2
