"""Tests for epinet.data.augment."""

from __future__ import annotations

import numpy as np
import pytest

from epinet.data import (
    AugmentSpec,
    DataError,
    Dataset,
    augment,
    crop_origins,
    iterate_batches,
)


def _ramp(n: int = 2, side: int = 6) -> np.ndarray:
    return np.arange(n * side * side, dtype=np.float32).reshape(n, 1, side, side)


def test_crop_origins__centered_without_generator() -> None:
    """Evaluation crops are centered."""
    np.testing.assert_array_equal(crop_origins(2, (32, 32), 28, None), [[2, 2], [2, 2]])


def test_crop_origins__uniform_within_bounds() -> None:
    """Training origins cover every valid offset and no other."""
    origins = crop_origins(2000, (32, 32), 28, np.random.default_rng(0))
    assert origins.min() == 0
    assert origins.max() == 4
    assert set(np.unique(origins).tolist()) == {0, 1, 2, 3, 4}


def test_crop_origins__crop_too_large() -> None:
    """A crop larger than the image is rejected."""
    with pytest.raises(DataError, match="exceeds"):
        crop_origins(1, (28, 28), 29, None)


def test_augment__center_crop_in_eval() -> None:
    """Without training the center crop is returned."""
    batch = _ramp()
    out = augment(batch, AugmentSpec(crop=4, flip=True), None, train=False)
    np.testing.assert_array_equal(out, batch[:, :, 1:5, 1:5])


def test_augment__full_size_crop_is_identity() -> None:
    """Cropping to the image side keeps the image (without flips)."""
    batch = _ramp()
    out = augment(batch, AugmentSpec(crop=6), np.random.default_rng(0))
    np.testing.assert_array_equal(out, batch)


def test_augment__flips_are_mirrors() -> None:
    """Flipped images are exact left-right mirrors."""
    batch = _ramp(n=64)
    out = augment(batch, AugmentSpec(crop=6, flip=True), np.random.default_rng(3))

    mirrored = [np.array_equal(o, b[:, :, ::-1]) for o, b in zip(out, batch)]
    kept = [np.array_equal(o, b) for o, b in zip(out, batch)]
    assert all(m or k for m, k in zip(mirrored, kept))
    assert 10 < sum(mirrored) < 54


def test_augment__seeded() -> None:
    """The same generator seed gives the same crops."""
    batch = _ramp(n=8, side=10)
    spec = AugmentSpec(crop=7, flip=True)
    np.testing.assert_array_equal(
        augment(batch, spec, np.random.default_rng(1)),
        augment(batch, spec, np.random.default_rng(1)),
    )


def test_augment__training_needs_generator() -> None:
    """Random augmentation requires a generator."""
    with pytest.raises(DataError, match="generator"):
        augment(_ramp(), AugmentSpec(crop=4), None)


class TestIterateBatches:
    """Tests for minibatch iteration."""

    @staticmethod
    def _dataset(n: int) -> Dataset:
        return Dataset(images=_ramp(n=n, side=2), labels=np.arange(n) % 10)

    def test_iterate__keeps_partial_batch(self) -> None:
        """Ten examples in batches of four give 4, 4 and 2."""
        batches = iterate_batches(self._dataset(10), 4, shuffle=False)
        sizes = [len(labels) for _, labels in batches]
        assert sizes == [4, 4, 2]

    def test_iterate__in_order_without_shuffle(self) -> None:
        """Unshuffled batches follow the dataset order."""
        labels = np.concatenate(
            [batch for _, batch in iterate_batches(self._dataset(7), 3, shuffle=False)]
        )
        np.testing.assert_array_equal(labels, np.arange(7))

    def test_iterate__shuffle_is_a_permutation(self) -> None:
        """Shuffled batches visit every example once."""
        labels = np.concatenate(
            [
                batch
                for _, batch in iterate_batches(
                    self._dataset(10), 3, np.random.default_rng(0)
                )
            ]
        )
        assert sorted(labels.tolist()) == list(range(10))
        assert labels.tolist() != list(range(10))

    def test_iterate__shuffle_needs_generator(self) -> None:
        """Shuffling requires a generator."""
        with pytest.raises(DataError, match="shuffling"):
            next(iterate_batches(self._dataset(3), 2))
