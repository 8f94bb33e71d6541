"""Convex combination of inputs and labels."""

from __future__ import annotations

import numpy as np
from scipy.stats import beta

from ..errors import RejectedInputError


def _check_ratio(lam: float) -> None:
    if not 0.0 <= lam <= 1.0:
        raise RejectedInputError(f"mixup ratio must lie in [0, 1], got {lam}")


def mixup_pair(a: np.ndarray, b: np.ndarray, lam: float) -> np.ndarray:
    """λ·a + (1−λ)·b, elementwise."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise RejectedInputError(f"cannot mix shapes {a.shape} and {b.shape}")
    _check_ratio(lam)
    if lam == 1.0:
        return a.copy()
    if lam == 0.0:
        return b.copy()
    return (lam * a + (1.0 - lam) * b).astype(np.result_type(a, b), copy=False)


def mixup_labels(a: np.ndarray, b: np.ndarray, lam: float | np.ndarray) -> np.ndarray:
    """Mix one-hot or soft label rows; ``lam`` may be a scalar or one value per row."""
    lam = np.asarray(lam, dtype=np.float64)
    if lam.ndim:
        lam = lam[:, None]
    return lam * a + (1.0 - lam) * b


def sample_mixup_ratio(alpha: float, rng: np.random.Generator, size: int | None = None) -> float | np.ndarray:
    """λ ~ Beta(α, α) by inverse transform of seeded uniforms."""
    if alpha <= 0:
        raise RejectedInputError(f"Beta parameter must be positive, got {alpha}")
    draw = beta.ppf(rng.random(size), alpha, alpha)
    return float(draw) if size is None else draw
