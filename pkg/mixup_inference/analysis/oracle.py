"""Idealized classifier F = H + G with an exactly linear part H.

Points live in label space: the linear part of a clean point is its one-hot,
and a mixture of points maps to the same mixture of one-hots. A residual G
models the non-linear response to an adversarial perturbation; the residuals
here do not depend on the base point, only on how far the perturbation is
scaled (1 for δ itself, λ after mixing).
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from ..config import MIVariant
from ..errors import RejectedInputError


class Residual:
    """G(s·δ; ·) as an L-vector for perturbation scale ``s``."""

    kind = "residual"

    def __call__(self, scale: float, num_classes: int) -> np.ndarray:
        raise NotImplementedError


class ZeroResidual(Residual):
    kind = "zero"

    def __call__(self, scale: float, num_classes: int) -> np.ndarray:
        return np.zeros(num_classes)


@dataclass(frozen=True)
class ConstantResidual(Residual):
    """The same vector for every non-zero perturbation."""

    vector: np.ndarray
    kind = "constant"

    def __call__(self, scale: float, num_classes: int) -> np.ndarray:
        vector = _check_length(self.vector, num_classes)
        return vector.copy() if scale > 0 else np.zeros(num_classes)


@dataclass(frozen=True)
class NormResidual(Residual):
    """``g(s·‖δ‖)·direction`` with a monotone ``g``; ``g`` = identity gives a λ-scaled G."""

    direction: np.ndarray
    norm: float = 1.0
    g: Callable[[float], float] = field(default=lambda t: t)
    kind = "norm"

    def __call__(self, scale: float, num_classes: int) -> np.ndarray:
        return self.g(scale * self.norm) * _check_length(self.direction, num_classes)


def _check_length(vector: np.ndarray, num_classes: int) -> np.ndarray:
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape != (num_classes,):
        raise RejectedInputError(f"residual must be a vector of length {num_classes}, got shape {vector.shape}")
    return vector


@dataclass(frozen=True)
class OraclePoint:
    """A clean (``z=0``) or perturbed (``z=1``) input whose clean label is ``y``."""

    y: int
    z: int = 0


@dataclass(frozen=True)
class LinearOracle:
    num_classes: int
    residual: Residual = field(default_factory=ZeroResidual)
    adversarial_label: Callable[[int], int] | None = None

    def __post_init__(self) -> None:
        if self.num_classes < 2:
            raise RejectedInputError(f"need at least 2 classes, got {self.num_classes}")

    def one_hot(self, label: int) -> np.ndarray:
        if not 0 <= label < self.num_classes:
            raise RejectedInputError(f"label {label} outside [0, {self.num_classes})")
        h = np.zeros(self.num_classes)
        h[label] = 1.0
        return h

    def linear(self, weights: dict[int, float]) -> np.ndarray:
        """H of the mixture Σ w_i·x_i: the same mixture of one-hots."""
        return sum((w * self.one_hot(label) for label, w in weights.items()), np.zeros(self.num_classes))

    def predicted_label(self, point: OraclePoint) -> int:
        if point.z == 0:
            return point.y
        y_hat = self.adversarial_label(point.y) if self.adversarial_label else (point.y + 1) % self.num_classes
        if y_hat == point.y:
            raise RejectedInputError("adversarial label map must move the prediction off the true label")
        return y_hat

    def residual_at(self, scale: float) -> np.ndarray:
        return self.residual(scale, self.num_classes)

    def predict(self, point: OraclePoint) -> np.ndarray:
        """F(x) = H(x0) + G(δ; x0)·1[z=1]."""
        out = self.one_hot(point.y)
        return out + self.residual_at(1.0) if point.z else out

    def mixed_expectation(self, point: OraclePoint, partner_probs: np.ndarray, lam: float) -> np.ndarray:
        """E over y_s of F(λx + (1−λ)x_s) = λH(x0) + (1−λ)E[H(x_s)] + G(λδ; x̃0)·1[z=1]."""
        out = lam * self.one_hot(point.y) + (1.0 - lam) * np.asarray(partner_probs, dtype=np.float64)
        return out + self.residual_at(lam) if point.z else out


def partner_probs(oracle: LinearOracle, variant: MIVariant, y_hat: int) -> np.ndarray:
    """Label distribution of MI partners for the oracle."""
    if variant is MIVariant.PL:
        return oracle.one_hot(y_hat)
    if variant is MIVariant.OL:
        probs = np.full(oracle.num_classes, 1.0 / (oracle.num_classes - 1))
        probs[y_hat] = 0.0
        return probs
    raise RejectedInputError("oracle outputs are defined for the PL and OL variants")


@dataclass(frozen=True)
class OracleCells:
    """True-label and predicted-label probabilities without and with MI."""

    f_y: float
    f_y_mixed: float
    f_yhat: float
    f_yhat_mixed: float


def oracle_mi_outputs(oracle: LinearOracle, z: int, variant: MIVariant, lam: float, y: int = 0) -> OracleCells:
    if z not in (0, 1):
        raise RejectedInputError(f"z must be 0 or 1, got {z}")
    point = OraclePoint(y=y, z=z)
    y_hat = oracle.predicted_label(point)
    bare = oracle.predict(point)
    mixed = oracle.mixed_expectation(point, partner_probs(oracle, variant, y_hat), lam)
    return OracleCells(
        f_y=float(bare[y]),
        f_y_mixed=float(mixed[y]),
        f_yhat=float(bare[y_hat]),
        f_yhat_mixed=float(mixed[y_hat]),
    )


def oracle_clean_accuracy(
    oracle: LinearOracle,
    lam: float,
    count: int,
    rng: np.random.Generator,
    executions: int | None = None,
) -> float:
    """Clean accuracy of MI-OL on the oracle over ``count`` random labels.

    ``executions=None`` scores the exact expectation; otherwise each input
    averages that many sampled partners.
    """
    labels = rng.integers(oracle.num_classes, size=count)
    correct = 0
    for y in labels:
        point = OraclePoint(int(y))
        if executions is None:
            probs = partner_probs(oracle, MIVariant.OL, int(y))
        else:
            others = np.delete(np.arange(oracle.num_classes), y)
            drawn = rng.choice(others, size=executions)
            probs = np.bincount(drawn, minlength=oracle.num_classes) / executions
        out = oracle.mixed_expectation(point, probs, lam)
        correct += int(np.argmax(out) == y)
    return correct / count
