import numpy as np
import pytest

from mixup_inference.analysis.metrics import auc, linearity_profile
from mixup_inference.analysis.oracle import LinearOracle
from mixup_inference.errors import RejectedInputError


def test_auc_small_example():
    # Adversarial scores fall below clean ones in 3 of 4 pairs.
    assert auc([0.5, 0.9], [0.1, 0.7]) == pytest.approx(0.75)
    assert auc([1.0], [0.0]) == 1.0
    assert auc([0.0], [1.0]) == 0.0
    assert auc([0.3], [0.3]) == 0.5


def test_auc_matches_pair_counting():
    rng = np.random.default_rng(0)
    clean = rng.integers(0, 10, size=200) / 10
    adv = rng.integers(0, 10, size=150) / 10
    diff = clean[:, None] - adv[None, :]
    expected = (np.sum(diff > 0) + 0.5 * np.sum(diff == 0)) / diff.size
    assert auc(clean, adv) == pytest.approx(expected, abs=1e-12)


def test_auc_needs_scores():
    with pytest.raises(RejectedInputError):
        auc([], [0.1])


def test_oracle_is_globally_linear():
    labels = np.random.default_rng(0).integers(0, 5, size=40)
    assert linearity_profile(LinearOracle(5), labels, 20, (0.2, 0.5, 0.8), np.random.default_rng(1)) == 0.0


def test_classifier_linearity(mlp, tiny_data):
    assert linearity_profile(mlp, tiny_data, 10, (0.0, 1.0), np.random.default_rng(0)) == 0.0
    gap = linearity_profile(mlp, tiny_data, 10, (0.0, 0.3, 0.7, 1.0), np.random.default_rng(0))
    assert gap >= 0.0


def test_linearity_needs_two_classes():
    with pytest.raises(RejectedInputError):
        linearity_profile(LinearOracle(3), np.zeros(10, dtype=int), 5, (0.5,), np.random.default_rng(0))
