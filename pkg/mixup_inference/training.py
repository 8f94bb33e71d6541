"""Training procedures: ERM, mixup, adversarial training and interpolated AT."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .artifacts import write_csv
from .attacks import pgd_batch
from .config import TrainConfig, TrainMethod
from .data import Dataset, mixup_labels, mixup_pair, sample_mixup_ratio
from .errors import RejectedInputError, TrainingDivergedError
from .nn import Architecture, Classifier, Gradients, Provenance, Tensor, softmax_cross_entropy

logger = logging.getLogger(__name__)


@dataclass
class TraceRow:
    epoch: int
    split: str
    loss: float
    accuracy: float


@dataclass
class TrainResult:
    model: Classifier
    trace: list[TraceRow] = field(default_factory=list)


class MomentumSGD:
    """Heavy-ball SGD: ``v = μv + g``, ``p -= lr·v``."""

    def __init__(self, model: Classifier, momentum: float, weight_decay: float = 0.0):
        self.params = dict(model.parameters())
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def step(self, lr: float, grads: Gradients) -> None:
        for name, param in self.params.items():
            grad = grads.params[name]
            if self.weight_decay:
                grad = grad + self.weight_decay * param.data
            velocity = self.velocity[name]
            velocity *= self.momentum
            velocity += grad
            param.data = (param.data - lr * velocity).astype(param.dtype, copy=False)


def _loss(model: Classifier, images: np.ndarray, targets: np.ndarray) -> Tensor:
    return softmax_cross_entropy(model.logits(Tensor(images), track_params=True), targets)


class _Streams:
    """Independent generators for shuffling, mixing and the inner attack."""

    def __init__(self, seed: int):
        shuffle, mix, attack = np.random.SeedSequence(seed).spawn(3)
        self.shuffle = np.random.default_rng(shuffle)
        self.mix = np.random.default_rng(mix)
        self.attack = np.random.default_rng(attack)


def _mix_plan(config: TrainConfig, n: int, rng: np.random.Generator) -> tuple[float, np.ndarray]:
    lam = config.fixed_lambda if config.fixed_lambda is not None else sample_mixup_ratio(config.alpha, rng)
    return lam, rng.permutation(n)


def _adversarial(model: Classifier, images: np.ndarray, labels: np.ndarray, config: TrainConfig, rng: np.random.Generator) -> np.ndarray:
    return pgd_batch(
        model,
        images,
        labels,
        config.attack_epsilon,
        config.attack_step_size,
        config.attack_steps,
        rng,
    )


def batch_loss(
    model: Classifier,
    images: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig,
    streams: _Streams,
) -> Tensor:
    """Objective of one minibatch under ``config.method``."""
    method = config.method
    if method is TrainMethod.ERM:
        return _loss(model, images, labels)

    onehot = np.eye(model.num_classes)[labels]
    if method is TrainMethod.MIXUP:
        lam, perm = _mix_plan(config, len(labels), streams.mix)
        return _loss(model, mixup_pair(images, images[perm], lam), mixup_labels(onehot, onehot[perm], lam))

    adversarial = _adversarial(model, images, labels, config, streams.attack)
    if method is TrainMethod.AT:
        # Clean and adversarial halves in a 1:1 ratio.
        return _loss(model, images, labels) * 0.5 + _loss(model, adversarial, labels) * 0.5

    lam, perm = _mix_plan(config, len(labels), streams.mix)
    soft = mixup_labels(onehot, onehot[perm], lam)
    clean = _loss(model, mixup_pair(images, images[perm], lam), soft)
    adv = _loss(model, mixup_pair(adversarial, adversarial[perm], lam), soft)
    return clean * 0.5 + adv * 0.5


def evaluate(model: Classifier, data: Dataset, batch_size: int = 256) -> tuple[float, float]:
    """Mean cross-entropy and accuracy of the bare model on ``data``."""
    if len(data) == 0:
        return float("nan"), float("nan")
    total_loss, correct = 0.0, 0
    for images, labels in data.batches(batch_size):
        probs = model.forward(images).probs
        picked = np.maximum(probs[np.arange(len(labels)), labels], np.finfo(np.float64).tiny)
        total_loss += float(-np.log(picked).sum())
        correct += int((probs.argmax(axis=1) == labels).sum())
    return total_loss / len(data), correct / len(data)


def train(
    data: Dataset,
    config: TrainConfig,
    architecture: Architecture,
    eval_data: Dataset | None = None,
    dtype=np.float32,
) -> TrainResult:
    """Run ``config.epochs`` epochs of the configured method from a seeded initialization."""
    if architecture.num_classes != data.num_classes or architecture.input_shape != data.image_shape:
        raise RejectedInputError(
            f"architecture {architecture.describe()} does not match data {data.image_shape} with {data.num_classes} classes"
        )
    model = Classifier.build(architecture, seed=config.seed, dtype=dtype)
    model.provenance = Provenance(method=config.method.value, seed=config.seed, epochs=config.epochs)
    streams = _Streams(config.seed)
    optimizer = MomentumSGD(model, config.momentum, config.weight_decay)
    result = TrainResult(model=model)

    logger.info(f"Training {config.method.value}: {len(data)} examples, {config.epochs} epochs, {model.num_parameters} parameters")
    for epoch in range(config.epochs):
        lr = config.learning_rate_at(epoch)
        running, seen = 0.0, 0
        for step, (images, labels) in enumerate(data.batches(config.batch_size, streams.shuffle)):
            loss = batch_loss(model, images, labels, config, streams)
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingDivergedError(f"non-finite loss {value} at epoch {epoch}, step {step} (lr={lr})")
            model.zero_grad()
            grads = model.backward(loss)
            with np.errstate(over="ignore", invalid="ignore"):
                optimizer.step(lr, grads)
            if not model.all_finite():
                raise TrainingDivergedError(f"non-finite parameters after epoch {epoch}, step {step} (loss={value:.6g}, lr={lr})")
            running += value * len(labels)
            seen += len(labels)

        model.zero_grad()
        _, train_acc = evaluate(model, data)
        result.trace.append(TraceRow(epoch, "train", running / max(seen, 1), train_acc))
        message = f"Epoch {epoch + 1}/{config.epochs} lr={lr:.4g} loss={running / max(seen, 1):.4f} acc={train_acc:.4f}"
        if eval_data is not None:
            eval_loss, eval_acc = evaluate(model, eval_data)
            result.trace.append(TraceRow(epoch, "test", eval_loss, eval_acc))
            message += f" test_acc={eval_acc:.4f}"
        logger.info(message)
    return result


def _require(config: TrainConfig, method: TrainMethod) -> None:
    if config.method is not method:
        raise RejectedInputError(f"config.method is '{config.method.value}', expected '{method.value}'")


def train_erm(data: Dataset, config: TrainConfig, architecture: Architecture) -> Classifier:
    _require(config, TrainMethod.ERM)
    return train(data, config, architecture).model


def train_mixup(data: Dataset, config: TrainConfig, architecture: Architecture) -> Classifier:
    _require(config, TrainMethod.MIXUP)
    return train(data, config, architecture).model


def train_at(data: Dataset, config: TrainConfig, architecture: Architecture) -> Classifier:
    _require(config, TrainMethod.AT)
    return train(data, config, architecture).model


def train_interpolated_at(data: Dataset, config: TrainConfig, architecture: Architecture) -> Classifier:
    _require(config, TrainMethod.INTERPOLATED_AT)
    return train(data, config, architecture).model


def write_trace(path: Path, trace: list[TraceRow]) -> Path:
    return write_csv(
        path,
        ["epoch", "split", "loss", "accuracy"],
        ([row.epoch, row.split, f"{row.loss:.6f}", f"{row.accuracy:.6f}"] for row in trace),
    )
