"""Central finite-difference gradient checking.

Each parameter block is perturbed element by element; the numeric gradient
``(f(θ+ε) − f(θ−ε)) / 2ε`` is compared with the analytic one by relative
error ``|a − n| / max(|a|, |n|, 1e-8)``. Elements whose perturbation flips a
routing decision (an argmax winner or a ReLU) straddle a kink and are
excluded rather than compared.
"""

from __future__ import annotations

import csv
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Final, TypeVar

import numpy as np

from epinet.config import (
    GRADCHECK_EPSILON,
    GRADCHECK_MARGIN_FACTOR,
    GRADCHECK_MAX_RESAMPLES,
    GRADCHECK_REL_FLOOR,
    GRADCHECK_TOLERANCE,
)
from epinet.tensor import EpinetError
from epinet.utils.types import Tensor

T = TypeVar("T")

CSV_COLUMNS: Final[tuple[str, ...]] = (
    "block",
    "elements",
    "excluded",
    "max_rel_error",
    "worst_index",
    "analytic",
    "numeric",
    "min_margin",
    "verdict",
)


class GradCheckError(EpinetError):
    """Raised for non-finite values or an unsatisfiable margin guard."""


@dataclass(frozen=True)
class BlockReport:
    """Result for one parameter block.

    Attributes:
        block: Block name, e.g. ``e1.weights`` or ``input``.
        elements: Number of elements compared.
        excluded: Elements skipped because their perturbation crossed a kink.
        max_rel_error: Largest relative error over compared elements.
        worst_index: Index of that element.
        analytic: Analytic gradient at the worst element.
        numeric: Numeric gradient at the worst element.
        min_margin: Routing margin of the unperturbed instance.
        passed: Whether ``max_rel_error`` is below the tolerance.
    """

    block: str
    elements: int
    excluded: int
    max_rel_error: float
    worst_index: tuple[int, ...]
    analytic: float
    numeric: float
    min_margin: float
    passed: bool

    def row(self, prefix: str = "") -> dict[str, str]:
        """Return the block as a CSV row."""
        return {
            "block": f"{prefix}{self.block}",
            "elements": str(self.elements),
            "excluded": str(self.excluded),
            "max_rel_error": f"{self.max_rel_error:.6e}",
            "worst_index": ":".join(map(str, self.worst_index)),
            "analytic": f"{self.analytic:.10e}",
            "numeric": f"{self.numeric:.10e}",
            "min_margin": f"{self.min_margin:.6e}",
            "verdict": "pass" if self.passed else "fail",
        }


@dataclass
class GradCheckReport:
    """Per-block results of one check.

    Attributes:
        name: What was checked.
        blocks: One report per parameter block.
        epsilon: Perturbation size.
        tolerance: Relative-error threshold.
    """

    name: str
    blocks: list[BlockReport] = field(default_factory=list)
    epsilon: float = GRADCHECK_EPSILON
    tolerance: float = GRADCHECK_TOLERANCE

    @property
    def passed(self) -> bool:
        """True iff every block passed."""
        return all(block.passed for block in self.blocks)

    @property
    def max_rel_error(self) -> float:
        """Largest relative error over all blocks."""
        return max((block.max_rel_error for block in self.blocks), default=0.0)

    @property
    def worst_block(self) -> BlockReport | None:
        """Block with the largest relative error."""
        return max(self.blocks, key=lambda block: block.max_rel_error, default=None)


def relative_error(analytic: float, numeric: float) -> float:
    """``|a − n| / max(|a|, |n|, 1e-8)``."""
    scale = max(abs(analytic), abs(numeric), GRADCHECK_REL_FLOOR)
    return abs(analytic - numeric) / scale


def _finite(value: float, where: str) -> float:
    if not np.isfinite(value):
        raise GradCheckError(f"non-finite value during gradient check ({where})")
    return value


def _indices(
    shape: tuple[int, ...], max_elements: int | None, rng: np.random.Generator | None
) -> np.ndarray:
    size = int(np.prod(shape))
    if max_elements is None or max_elements >= size:
        return np.arange(size)
    if rng is None:
        raise GradCheckError("element subsampling needs a random generator")
    return np.sort(rng.choice(size, size=max_elements, replace=False))


def check_op(
    loss_fn: Callable[[], float],
    params: Mapping[str, Tensor],
    analytic: Mapping[str, Tensor],
    *,
    name: str = "op",
    epsilon: float = GRADCHECK_EPSILON,
    tolerance: float = GRADCHECK_TOLERANCE,
    routing: Callable[[], bytes] | None = None,
    margin: float = float("inf"),
    max_elements: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    Args:
        loss_fn: Scalar loss computed from the current contents of ``params``.
        params: Float64 blocks to perturb in place (restored afterwards).
        analytic: Analytic gradients, same keys and shapes as ``params``.
        name: Label for the report.
        epsilon: Perturbation size.
        tolerance: Relative-error threshold.
        routing: Signature of the routing of the most recent ``loss_fn`` call;
            elements whose ± perturbation changes it are excluded.
        margin: Routing margin of the unperturbed instance, for the report.
        max_elements: Compare at most this many elements per block.
        rng: Generator for element subsampling.

    Returns:
        The report.

    Raises:
        GradCheckError: On non-float64 blocks, shape mismatches or non-finite
            values.
    """
    _finite(loss_fn(), f"{name} base loss")
    base_routing = routing() if routing is not None else b""
    report = GradCheckReport(name=name, epsilon=epsilon, tolerance=tolerance)

    for block, param in params.items():
        if param.dtype != np.float64:
            raise GradCheckError(
                f"{name}/{block}: gradient checks need float64, got {param.dtype}"
            )
        grad = analytic.get(block)
        if grad is None or grad.shape != param.shape:
            raise GradCheckError(
                f"{name}/{block}: analytic gradient missing or misshapen "
                f"({None if grad is None else grad.shape} vs {param.shape})"
            )
        flat = param.reshape(-1)
        if not np.shares_memory(flat, param):
            raise GradCheckError(f"{name}/{block}: parameter must be contiguous")

        worst, worst_at, worst_pair = -1.0, 0, (0.0, 0.0)
        compared = excluded = 0
        for index in _indices(param.shape, max_elements, rng):
            original = flat[index]
            flat[index] = original + epsilon
            plus = _finite(loss_fn(), f"{name}/{block}[{index}] +ε")
            crossed = routing is not None and routing() != base_routing
            flat[index] = original - epsilon
            minus = _finite(loss_fn(), f"{name}/{block}[{index}] −ε")
            crossed = crossed or (routing is not None and routing() != base_routing)
            flat[index] = original
            if crossed:
                excluded += 1
                continue
            numeric = (plus - minus) / (2 * epsilon)
            value = float(grad.reshape(-1)[index])
            error = relative_error(value, numeric)
            compared += 1
            if error > worst:
                worst, worst_at, worst_pair = error, int(index), (value, numeric)

        report.blocks.append(
            BlockReport(
                block=block,
                elements=compared,
                excluded=excluded,
                max_rel_error=max(worst, 0.0),
                worst_index=tuple(
                    int(i) for i in np.unravel_index(worst_at, param.shape)
                ),
                analytic=worst_pair[0],
                numeric=worst_pair[1],
                min_margin=margin,
                passed=worst < tolerance,
            )
        )
    return report


def margin_guarded(
    sample: Callable[[np.random.Generator], T],
    margin: Callable[[T], float],
    rng: np.random.Generator,
    *,
    epsilon: float = GRADCHECK_EPSILON,
    factor: float = GRADCHECK_MARGIN_FACTOR,
    max_resamples: int = GRADCHECK_MAX_RESAMPLES,
) -> tuple[T, float]:
    """Draw instances until one sits more than ``factor·ε`` from every kink.

    Returns:
        (instance, its margin).

    Raises:
        GradCheckError: If no instance qualifies within ``max_resamples`` draws.
    """
    threshold = factor * epsilon
    best = 0.0
    for _ in range(max_resamples):
        instance = sample(rng)
        value = margin(instance)
        if value > threshold:
            return instance, value
        best = max(best, value)
    raise GradCheckError(
        f"margin guard unsatisfiable: best margin {best:.3e} <= {threshold:.3e} "
        f"after {max_resamples} resamples"
    )


def write_csv(reports: Iterable[GradCheckReport], path: Path) -> None:
    """Write one CSV row per block, prefixed with the report name.

    Raises:
        GradCheckError: If the file cannot be written.
    """
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.DictWriter(handle, fieldnames=CSV_COLUMNS)
            writer.writeheader()
            for report in reports:
                for block in report.blocks:
                    writer.writerow(block.row(prefix=f"{report.name}/"))
    except OSError as e:
        raise GradCheckError(f"cannot write gradient-check report {path}: {e}") from e
