"""The augmented data triplet (x, y, z) with optional perturbation record."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import RejectedInputError

TOLERANCE = 1e-6


@dataclass(frozen=True)
class AdversarialTriplet:
    """``x = x0 + δ·1[z=1]``; validated on construction.

    ``index`` refers back to the dataset row the clean point came from.
    """

    x: np.ndarray
    y: int
    z: int
    delta: np.ndarray | None = None
    x0: np.ndarray | None = None
    epsilon: float | None = None
    index: int | None = None

    def __post_init__(self) -> None:
        if self.z not in (0, 1):
            raise RejectedInputError(f"z must be 0 or 1, got {self.z}")
        if self.z == 0:
            if self.delta is not None:
                raise RejectedInputError("clean triplet cannot carry a perturbation")
            if self.x0 is not None and not np.array_equal(self.x, self.x0):
                raise RejectedInputError("clean triplet must have x == x0")
        if self.delta is None:
            return
        if self.x0 is None:
            raise RejectedInputError("a recorded perturbation needs its clean point x0")
        if self.epsilon is not None and np.max(np.abs(self.delta), initial=0.0) > self.epsilon + TOLERANCE:
            raise RejectedInputError(f"perturbation exceeds the L-inf budget {self.epsilon}")
        if np.max(np.abs(np.clip(self.x0 + self.delta, 0.0, 1.0) - self.x), initial=0.0) > TOLERANCE:
            raise RejectedInputError("x must equal clip(x0 + delta)")

    @classmethod
    def clean(cls, x: np.ndarray, y: int, index: int | None = None) -> AdversarialTriplet:
        return cls(x=x, y=int(y), z=0, x0=x, index=index)

    @classmethod
    def adversarial(
        cls,
        x0: np.ndarray,
        x_adv: np.ndarray,
        y: int,
        epsilon: float,
        index: int | None = None,
    ) -> AdversarialTriplet:
        return cls(x=x_adv, y=int(y), z=1, delta=x_adv - x0, x0=x0, epsilon=epsilon, index=index)

    @property
    def has_record(self) -> bool:
        return self.delta is not None and self.x0 is not None
