"""Method comparisons on synthetic data; slow because several models are trained."""

import numpy as np
import pytest

from mixup_inference.analysis.experiments import adaptive_curve, detection_experiment
from mixup_inference.analysis.metrics import linearity_profile
from mixup_inference.analysis.theory import ric_curves
from mixup_inference.attacks import attack_batch, robust_accuracy
from mixup_inference.config import ArchitectureKind, AttackConfig, MIConfig, MIVariant, TrainConfig, TrainMethod
from mixup_inference.data import build_sample_pool, gen_synthetic
from mixup_inference.inference import MIDefense, defended_accuracy
from mixup_inference.nn import Architecture
from mixup_inference.training import train

pytestmark = pytest.mark.slow

SHAPE = (3, 8, 8)
CLASSES = 4
EPSILON = 0.15


@pytest.fixture(scope="module")
def splits():
    train_set = gen_synthetic(480, CLASSES, seed=0, image_shape=SHAPE, noise=0.2)
    test_set = gen_synthetic(80, CLASSES, seed=1, image_shape=SHAPE, noise=0.2, split="test", prototype_seed=0)
    remaining, held_out = train_set.split_holdout(10, seed=0)
    return remaining, test_set, build_sample_pool(held_out, 10, seed=0)


@pytest.fixture(scope="module")
def models(splits):
    train_set, _, _ = splits
    architecture = Architecture(ArchitectureKind.MLP, SHAPE, CLASSES, hidden=(32,))
    common = {
        "epochs": 15,
        "batch_size": 32,
        "learning_rate": 0.05,
        "lr_decay_epochs": (),
        "seed": 2,
        "attack_epsilon": EPSILON,
        "attack_step_size": 0.04,
        "attack_steps": 5,
    }
    return {
        method: train(train_set, TrainConfig(method=method, **common), architecture).model
        for method in (TrainMethod.ERM, TrainMethod.MIXUP, TrainMethod.AT)
    }


@pytest.fixture(scope="module")
def attack():
    return AttackConfig(epsilon=EPSILON, step_size=0.03, steps=10, seed=3)


def successful(model, triplets):
    return [t for t in triplets if model.predict(t.x[None])[0] != t.y]


def test_mixup_is_more_linear_between_classes(splits, models):
    _, test_set, _ = splits
    lambdas = tuple(np.linspace(0.0, 1.0, 11))
    erm = linearity_profile(models[TrainMethod.ERM], test_set, 40, lambdas, np.random.default_rng(0))
    mixup = linearity_profile(models[TrainMethod.MIXUP], test_set, 40, lambdas, np.random.default_rng(0))
    assert mixup < erm


def test_adversarial_training_is_more_robust(splits, models, attack):
    _, test_set, _ = splits
    accuracy = {
        method: robust_accuracy(models[method], attack_batch(models[method], test_set, attack))
        for method in (TrainMethod.ERM, TrainMethod.AT)
    }
    assert accuracy[TrainMethod.AT] >= accuracy[TrainMethod.ERM]


def test_mi_ol_recovers_accuracy_under_pgd(splits, models, attack):
    _, test_set, pool = splits
    model = models[TrainMethod.MIXUP]
    triplets = attack_batch(model, test_set, attack)
    x = np.stack([t.x for t in triplets])
    y = np.array([t.y for t in triplets])
    defense = MIDefense(MIConfig(variant=MIVariant.OL, lam=0.5, executions=20), pool)
    assert defended_accuracy(model, defense, x, y, seed=0) >= robust_accuracy(model, triplets)


def test_adaptive_attack_gets_stronger_with_more_samples(splits, models, attack):
    _, test_set, pool = splits
    mi = MIConfig(variant=MIVariant.OL, lam=0.5, executions=10)
    rows = adaptive_curve(models[TrainMethod.MIXUP], test_set.head(24), mi, pool, attack, (1, 8), seed=0)
    first, last = float(rows[0][2]), float(rows[-1][2])
    assert last <= first + 0.05


def test_ric_holds_on_part_of_the_ratio_range(splits, models, attack):
    _, test_set, pool = splits
    model = models[TrainMethod.MIXUP]
    triplets = successful(model, attack_batch(model, test_set.head(40), attack))
    reports = ric_curves(model, triplets, MIVariant.OL, (0.3, 0.4, 0.5, 0.6, 0.7, 0.8), MIConfig(), pool)
    assert any(report.satisfied for report in reports)


def test_mi_pl_separates_adversarial_inputs(splits, models, attack):
    _, test_set, pool = splits
    model = models[TrainMethod.MIXUP]
    triplets = successful(model, attack_batch(model, test_set, attack))
    _, summary = detection_experiment(model, triplets, MIConfig(executions=20), pool, seed=0)
    assert summary["mi_pl_auc"] > 0.7
