"""Detection AUC and global-linearity profiling."""

from __future__ import annotations

from functools import singledispatch

import numpy as np
from scipy.stats import rankdata

from ..data import Dataset
from ..errors import RejectedInputError
from ..nn import Classifier
from .oracle import LinearOracle


def auc(clean_scores, adv_scores) -> float:
    """P(adversarial score < clean score), ties counting one half (Mann-Whitney U)."""
    clean = np.asarray(clean_scores, dtype=np.float64)
    adv = np.asarray(adv_scores, dtype=np.float64)
    if clean.size == 0 or adv.size == 0:
        raise RejectedInputError("AUC needs non-empty clean and adversarial score lists")
    ranks = rankdata(np.concatenate([clean, adv]))
    n_clean = clean.size
    u_clean = ranks[:n_clean].sum() - n_clean * (n_clean + 1) / 2.0
    return float(u_clean / (n_clean * adv.size))


def _cross_class_pairs(labels: np.ndarray, segments: int, rng: np.random.Generator) -> np.ndarray:
    if np.unique(labels).size < 2:
        raise RejectedInputError("linearity profile needs at least 2 classes present")
    pairs = []
    while len(pairs) < segments:
        i, j = rng.integers(len(labels), size=2)
        if labels[i] != labels[j]:
            pairs.append((i, j))
    return np.array(pairs)


@singledispatch
def linearity_profile(model, data, segments: int, lambdas, rng: np.random.Generator) -> float:
    """Mean L1 gap ‖F(λx_i + (1−λ)x_j) − λF(x_i) − (1−λ)F(x_j)‖ over cross-class segments."""
    raise TypeError(f"unsupported model type {type(model).__name__}")


@linearity_profile.register
def _(model: Classifier, data: Dataset, segments: int, lambdas, rng: np.random.Generator) -> float:
    pairs = _cross_class_pairs(data.labels, segments, rng)
    interior = [lam for lam in lambdas if 0.0 < lam < 1.0]
    if not interior:
        return 0.0
    left, right = data.images[pairs[:, 0]], data.images[pairs[:, 1]]
    f_left, f_right = model.forward(left).probs, model.forward(right).probs
    total = 0.0
    for lam in interior:
        mixed = model.forward(lam * left + (1.0 - lam) * right).probs
        total += np.abs(mixed - lam * f_left - (1.0 - lam) * f_right).sum(axis=1).sum()
    # Endpoints contribute zero by construction.
    return float(total / (len(pairs) * len(lambdas)))


@linearity_profile.register
def _(model: LinearOracle, data: np.ndarray, segments: int, lambdas, rng: np.random.Generator) -> float:
    labels = np.asarray(data)
    pairs = _cross_class_pairs(labels, segments, rng)
    total = 0.0
    for i, j in pairs:
        a, b = int(labels[i]), int(labels[j])
        for lam in lambdas:
            mixed = model.linear({a: lam, b: 1.0 - lam})
            total += np.abs(mixed - lam * model.one_hot(a) - (1.0 - lam) * model.one_hot(b)).sum()
    return float(total / (len(pairs) * len(lambdas)))
