"""Closed-form conditions on the mixup ratio."""

from __future__ import annotations

from dataclasses import dataclass

from ..config import MIVariant
from ..errors import RejectedInputError


def lambda_threshold(num_classes: int) -> float:
    """Smallest λ (exclusive) at which MI-OL still classifies clean inputs correctly."""
    if num_classes < 2:
        raise RejectedInputError(f"need at least 2 classes, got {num_classes}")
    return 1.0 / num_classes


@dataclass(frozen=True)
class RICThresholds:
    """The ŷ gap must exceed ``adversarial``; the y gap must stay below ``true``."""

    adversarial: float
    true: float


def ric_thresholds(variant: MIVariant, lam: float, num_classes: int) -> RICThresholds:
    """Bounds on the two RIC gaps for this variant and ratio."""
    if num_classes < 2:
        raise RejectedInputError(f"need at least 2 classes, got {num_classes}")
    if variant is MIVariant.PL:
        return RICThresholds(adversarial=1.0 - lam, true=lam - 1.0)
    if variant is MIVariant.OL:
        return RICThresholds(adversarial=0.0, true=(lam - 1.0) * (num_classes - 2) / (num_classes - 1))
    raise RejectedInputError("RIC thresholds are defined for the PL and OL variants only")
