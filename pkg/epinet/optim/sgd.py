"""SGD with momentum, selective weight decay and a step learning-rate schedule."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from epinet.config import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_LR,
    DEFAULT_MOMENTUM,
    DEFAULT_WEIGHT_DECAY,
)
from epinet.tensor import EpinetError
from epinet.utils.types import Tensor


class OptimError(EpinetError):
    """Raised for invalid optimizer settings or updates."""


@dataclass(frozen=True)
class SgdConfig:
    """SGD hyperparameters.

    Attributes:
        lr: Initial learning rate.
        momentum: Momentum in [0, 1).
        weight_decay: L2 factor applied to decay-enabled groups.
        batch_size: Minibatch size.
        schedule: (epoch, multiplier) steps, epochs strictly increasing.
    """

    lr: float = DEFAULT_LR
    momentum: float = DEFAULT_MOMENTUM
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    batch_size: int = DEFAULT_BATCH_SIZE
    schedule: tuple[tuple[int, float], ...] = ()

    def __post_init__(self) -> None:
        """Validate the hyperparameters.

        Raises:
            OptimError: If a value is out of range.
        """
        if self.lr <= 0:
            raise OptimError(f"learning rate must be positive, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise OptimError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise OptimError(f"weight decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            raise OptimError(f"batch size must be >= 1, got {self.batch_size}")
        epochs = [epoch for epoch, _ in self.schedule]
        if any(later <= earlier for earlier, later in zip(epochs, epochs[1:])):
            raise OptimError(f"schedule epochs must strictly increase, got {epochs}")


@dataclass
class ParamGroup:
    """A parameter tensor with its velocity.

    Attributes:
        name: Qualified parameter name, e.g. ``e1.weights``.
        param: Parameter array, updated in place.
        velocity: Momentum buffer of the same shape.
        decay_enabled: Whether weight decay applies.
    """

    name: str
    param: Tensor
    velocity: Tensor = field(default_factory=lambda: np.zeros(0))
    decay_enabled: bool = True

    def __post_init__(self) -> None:
        """Create or validate the velocity buffer.

        Raises:
            OptimError: If the velocity shape does not match.
        """
        if self.velocity.size == 0 and self.param.size != 0:
            self.velocity = np.zeros_like(self.param)
        if self.velocity.shape != self.param.shape:
            raise OptimError(
                f"{self.name}: velocity {self.velocity.shape} does not match "
                f"parameter {self.param.shape}"
            )


def parse_schedule(text: str) -> tuple[tuple[int, float], ...]:
    """Parse ``"10:0.1,20:0.1"`` into schedule steps.

    Raises:
        OptimError: If an entry is malformed.
    """
    steps = []
    for entry in filter(None, (part.strip() for part in text.split(","))):
        try:
            epoch, multiplier = entry.split(":")
            steps.append((int(epoch), float(multiplier)))
        except ValueError as e:
            raise OptimError(
                f"invalid schedule entry {entry!r}, expected EPOCH:MULT"
            ) from e
    return tuple(steps)


def apply_schedule(cfg: SgdConfig, epoch: int) -> float:
    """Effective learning rate at ``epoch`` (steps compose multiplicatively)."""
    lr = cfg.lr
    for start, multiplier in cfg.schedule:
        if epoch >= start:
            lr *= multiplier
    return lr


def sgd_step(
    group: ParamGroup, grad: Tensor, cfg: SgdConfig, lr: float | None = None
) -> None:
    """Apply one momentum update in place.

    ``v ← momentum·v − lr·(grad + wd·w)``, then ``w ← w + v``.

    Args:
        group: Parameter group to update.
        grad: Gradient of the loss with respect to ``group.param``.
        cfg: Hyperparameters.
        lr: Learning rate override (the scheduled rate); ``cfg.lr`` when None.

    Raises:
        OptimError: On a shape mismatch or a non-finite gradient.
    """
    if grad.shape != group.param.shape:
        raise OptimError(
            f"{group.name}: gradient {grad.shape} does not match parameter "
            f"{group.param.shape}"
        )
    if not np.all(np.isfinite(grad)):
        raise OptimError(f"{group.name}: non-finite gradient")
    rate = cfg.lr if lr is None else lr
    decay = cfg.weight_decay if group.decay_enabled else 0.0
    step = grad + decay * group.param if decay else grad
    dtype = group.param.dtype
    group.velocity *= dtype.type(cfg.momentum)
    group.velocity -= dtype.type(rate) * step
    group.param += group.velocity


class Sgd:
    """Optimizer over named parameter groups."""

    def __init__(self, groups: Sequence[ParamGroup], cfg: SgdConfig) -> None:
        """Initialize the optimizer.

        Args:
            groups: Parameter groups, in network order.
            cfg: Hyperparameters.
        """
        self.groups = {group.name: group for group in groups}
        self.cfg = cfg

    def step(self, grads: Mapping[str, Tensor], epoch: int) -> float:
        """Update every group with its gradient.

        Args:
            grads: Gradients keyed by qualified parameter name.
            epoch: Current epoch, for the schedule.

        Returns:
            The learning rate used.

        Raises:
            OptimError: If a group has no gradient.
        """
        lr = apply_schedule(self.cfg, epoch)
        for name, group in self.groups.items():
            if name not in grads:
                raise OptimError(f"no gradient for parameter '{name}'")
            sgd_step(group, grads[name], self.cfg, lr)
        return lr

    def velocities(self) -> dict[str, Tensor]:
        """Return the momentum buffers by parameter name."""
        return {name: group.velocity for name, group in self.groups.items()}

    def load_velocities(self, velocities: Mapping[str, Tensor]) -> None:
        """Copy stored momentum buffers into the groups.

        Raises:
            OptimError: If a buffer is missing or misshapen.
        """
        for name, group in self.groups.items():
            if name not in velocities:
                raise OptimError(f"no stored velocity for parameter '{name}'")
            if velocities[name].shape != group.velocity.shape:
                raise OptimError(
                    f"{name}: stored velocity {velocities[name].shape} does not match "
                    f"{group.velocity.shape}"
                )
            group.velocity[...] = velocities[name]
