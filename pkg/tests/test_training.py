import numpy as np
import pytest
from numpy.testing import assert_allclose

from mixup_inference.artifacts import read_csv
from mixup_inference.config import ArchitectureKind, TrainConfig, TrainMethod
from mixup_inference.errors import RejectedInputError, TrainingDivergedError
from mixup_inference.nn import Architecture, Classifier
from mixup_inference.training import evaluate, train, train_erm, train_mixup, write_trace


@pytest.fixture
def architecture(tiny_data) -> Architecture:
    return Architecture(ArchitectureKind.MLP, tiny_data.image_shape, tiny_data.num_classes, hidden=(6,))


def run(data, architecture, **overrides) -> np.ndarray:
    settings = {"epochs": 2, "batch_size": 16, "learning_rate": 0.05, "seed": 3, "attack_steps": 2} | overrides
    return train(data, TrainConfig(**settings), architecture, dtype=np.float64).model.flat_parameters()


def test_training_is_deterministic(tiny_data, architecture):
    first = train(tiny_data, TrainConfig(method=TrainMethod.MIXUP, epochs=2, seed=5), architecture, dtype=np.float64)
    second = train(tiny_data, TrainConfig(method=TrainMethod.MIXUP, epochs=2, seed=5), architecture, dtype=np.float64)
    assert np.array_equal(first.model.flat_parameters(), second.model.flat_parameters())
    assert first.trace == second.trace


def test_zero_epochs_returns_initialization(tiny_data, architecture):
    result = train(tiny_data, TrainConfig(method=TrainMethod.ERM, epochs=0, seed=9), architecture, dtype=np.float64)
    assert np.array_equal(result.model.flat_parameters(), Classifier.build(architecture, 9, np.float64).flat_parameters())
    assert result.trace == []
    assert result.model.provenance.method == "erm" and result.model.provenance.epochs == 0


def test_mixup_at_fixed_ratio_one_is_erm(tiny_data, architecture):
    erm = run(tiny_data, architecture, method=TrainMethod.ERM)
    mixup = run(tiny_data, architecture, method=TrainMethod.MIXUP, fixed_lambda=1.0)
    assert_allclose(mixup, erm, rtol=0, atol=1e-12)


def test_adversarial_training_without_budget_is_erm(tiny_data, architecture):
    erm = run(tiny_data, architecture, method=TrainMethod.ERM)
    at = run(tiny_data, architecture, method=TrainMethod.AT, attack_epsilon=0.0)
    assert_allclose(at, erm, rtol=0, atol=1e-12)


def test_interpolated_at_at_ratio_one_is_at(tiny_data, architecture):
    at = run(tiny_data, architecture, method=TrainMethod.AT, attack_epsilon=0.05)
    iat = run(tiny_data, architecture, method=TrainMethod.INTERPOLATED_AT, attack_epsilon=0.05, fixed_lambda=1.0)
    assert_allclose(iat, at, rtol=0, atol=1e-12)


def test_interpolated_at_without_budget_is_mixup(tiny_data, architecture):
    mixup = run(tiny_data, architecture, method=TrainMethod.MIXUP)
    iat = run(tiny_data, architecture, method=TrainMethod.INTERPOLATED_AT, attack_epsilon=0.0)
    assert_allclose(iat, mixup, rtol=0, atol=1e-12)


def test_training_reduces_loss(tiny_data, architecture):
    config = TrainConfig(method=TrainMethod.ERM, epochs=6, batch_size=16, learning_rate=0.05, seed=0)
    model = train(tiny_data, config, architecture, dtype=np.float64).model
    initial_loss, _ = evaluate(Classifier.build(architecture, 0, np.float64), tiny_data)
    loss, _ = evaluate(model, tiny_data)
    assert loss < initial_loss


def test_divergence_is_reported(tiny_data, architecture):
    config = TrainConfig(method=TrainMethod.ERM, epochs=1, learning_rate=float("inf"))
    with pytest.raises(TrainingDivergedError, match="epoch 0"):
        train(tiny_data, config, architecture)


def test_method_wrappers_check_the_method(tiny_data, architecture):
    with pytest.raises(RejectedInputError):
        train_erm(tiny_data, TrainConfig(method=TrainMethod.MIXUP, epochs=0), architecture)
    model = train_mixup(tiny_data, TrainConfig(method=TrainMethod.MIXUP, epochs=0), architecture)
    assert isinstance(model, Classifier)


def test_architecture_must_match_data(tiny_data):
    wrong = Architecture(ArchitectureKind.MLP, (3, 4, 4), tiny_data.num_classes, hidden=(4,))
    with pytest.raises(RejectedInputError):
        train(tiny_data, TrainConfig(epochs=0), wrong)


def test_trace_has_train_and_test_rows(tiny_data, architecture, tmp_path):
    config = TrainConfig(method=TrainMethod.ERM, epochs=2, batch_size=32)
    result = train(tiny_data, config, architecture, eval_data=tiny_data.head(10))
    assert [(row.epoch, row.split) for row in result.trace] == [(0, "train"), (0, "test"), (1, "train"), (1, "test")]
    rows = read_csv(write_trace(tmp_path / "trace.csv", result.trace))
    assert list(rows[0]) == ["epoch", "split", "loss", "accuracy"] and len(rows) == 4
