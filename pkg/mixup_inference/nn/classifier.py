"""Classifier F: architecture descriptor, prediction vectors, losses and gradients."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.special import softmax

from ..config import ArchitectureKind, ModelConfig
from ..errors import RejectedInputError
from .layers import Conv2d, Flatten, Layer, Linear, MaxPool2d, ReLU
from .tensor import Tensor, no_grad

_TINY = np.finfo(np.float64).tiny
# Slack for mixtures of in-range images that land an ulp outside [0, 1].
PIXEL_TOLERANCE = 1e-6


@dataclass(frozen=True)
class PredictionVector:
    """Softmax output F(x) of one input together with its logits."""

    probs: np.ndarray
    logits: np.ndarray

    @classmethod
    def from_logits(cls, logits: np.ndarray) -> PredictionVector:
        logits = np.asarray(logits, dtype=np.float64)
        return cls(probs=softmax(logits), logits=logits)

    @classmethod
    def from_probs(cls, probs: np.ndarray) -> PredictionVector:
        """Wrap an averaged probability vector; logits are its log."""
        probs = np.asarray(probs, dtype=np.float64)
        return cls(probs=probs, logits=np.log(np.maximum(probs, _TINY)))

    @property
    def num_classes(self) -> int:
        return self.probs.shape[-1]

    @property
    def label(self) -> int:
        # np.argmax keeps the lowest index on ties.
        return int(np.argmax(self.probs))

    def __getitem__(self, k: int) -> float:
        return float(self.probs[k])


@dataclass(frozen=True)
class PredictionBatch:
    """One PredictionVector per batch row, stored as ``(N, L)`` arrays."""

    probs: np.ndarray
    logits: np.ndarray

    @classmethod
    def from_logits(cls, logits: np.ndarray) -> PredictionBatch:
        logits = np.asarray(logits, dtype=np.float64)
        return cls(probs=softmax(logits, axis=-1), logits=logits)

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.probs, axis=-1)

    def __len__(self) -> int:
        return self.probs.shape[0]

    def __getitem__(self, i: int) -> PredictionVector:
        return PredictionVector(probs=self.probs[i], logits=self.logits[i])


@dataclass(frozen=True)
class Architecture:
    """Serializable description of a classifier's layer stack."""

    kind: ArchitectureKind
    input_shape: tuple[int, ...]
    num_classes: int
    conv_channels: tuple[int, ...] = ()
    hidden: tuple[int, ...] = ()
    kernel_size: int = 3

    @classmethod
    def from_config(cls, config: ModelConfig, input_shape: tuple[int, ...], num_classes: int) -> Architecture:
        return cls(
            kind=config.kind,
            input_shape=tuple(input_shape),
            num_classes=num_classes,
            conv_channels=config.conv_channels if config.kind is ArchitectureKind.CNN else (),
            hidden=config.hidden if config.kind is not ArchitectureKind.LINEAR else (),
            kernel_size=config.kernel_size,
        )

    def describe(self) -> str:
        """Compact text form, e.g. ``cnn;3x32x32;c16,32;h48;k3;L10``."""
        return ";".join(
            [
                self.kind.value,
                "x".join(str(d) for d in self.input_shape),
                "c" + ",".join(str(c) for c in self.conv_channels),
                "h" + ",".join(str(h) for h in self.hidden),
                f"k{self.kernel_size}",
                f"L{self.num_classes}",
            ]
        )

    @classmethod
    def parse(cls, text: str) -> Architecture:
        try:
            kind, shape, conv, hidden, kernel, classes = text.split(";")

            def ints(body: str) -> tuple[int, ...]:
                return tuple(int(v) for v in body.split(",") if v)

            return cls(
                kind=ArchitectureKind(kind),
                input_shape=tuple(int(d) for d in shape.split("x")),
                num_classes=int(classes[1:]),
                conv_channels=ints(conv[1:]),
                hidden=ints(hidden[1:]),
                kernel_size=int(kernel[1:]),
            )
        except (ValueError, IndexError) as e:
            raise RejectedInputError(f"Malformed architecture descriptor {text!r}: {e}") from e

    def build_layers(self, rng: np.random.Generator, dtype=np.float32) -> list[Layer]:
        layers: list[Layer] = []
        if self.kind is ArchitectureKind.CNN:
            channels = self.input_shape[0]
            for out in self.conv_channels:
                layers += [Conv2d(channels, out, self.kernel_size, rng, dtype), ReLU(), MaxPool2d(2)]
                channels = out
        layers.append(Flatten())

        # Trace shapes so incompatible descriptors fail at construction.
        shape = self.input_shape
        for layer in layers:
            shape = layer.output_shape(shape)
        width = shape[0]
        for units in self.hidden:
            layers += [Linear(width, units, rng, dtype), ReLU()]
            width = units
        layers.append(Linear(width, self.num_classes, rng, dtype))
        return layers


@dataclass
class Provenance:
    """How a classifier's parameters came to be; stored in checkpoints."""

    method: str = "untrained"
    seed: int = 0
    epochs: int = 0


@dataclass
class Gradients:
    """Gradient store filled by :meth:`Classifier.backward`."""

    params: dict[str, np.ndarray] = field(default_factory=dict)
    input: np.ndarray | None = None


def soft_targets(targets: np.ndarray, num_classes: int) -> np.ndarray:
    """Validate hard labels ``(N,)`` or soft labels ``(N, L)`` and return soft labels."""
    targets = np.asarray(targets)
    if targets.ndim == 1:
        if not np.issubdtype(targets.dtype, np.integer):
            raise RejectedInputError(f"hard labels must be integers, got dtype {targets.dtype}")
        if targets.size and (targets.min() < 0 or targets.max() >= num_classes):
            raise RejectedInputError(f"label out of range [0, {num_classes}): {targets.min()}..{targets.max()}")
        return np.eye(num_classes)[targets]
    if targets.ndim != 2 or targets.shape[1] != num_classes:
        raise RejectedInputError(f"soft labels must have shape (N, {num_classes}), got {targets.shape}")
    if np.any(targets < 0) or not np.allclose(targets.sum(axis=1), 1.0, atol=1e-6):
        raise RejectedInputError("soft labels must be non-negative and sum to 1")
    return targets


def softmax_cross_entropy(
    logits: Tensor,
    targets: np.ndarray,
    reduction: Literal["mean", "sum", "none"] = "mean",
) -> Tensor:
    """Cross-entropy of softmax(logits) against hard or soft targets."""
    weights = soft_targets(targets, logits.shape[-1]).astype(logits.dtype)
    per_example = (logits.log_softmax() * weights).sum(axis=1) * -1.0
    if reduction == "none":
        return per_example
    if reduction == "sum":
        return per_example.sum()
    return per_example.mean()


def cross_entropy(pred: PredictionVector | np.ndarray, target: int | np.ndarray) -> float:
    """Cross-entropy of a probability vector against a label or a soft label."""
    probs = pred.probs if isinstance(pred, PredictionVector) else np.asarray(pred, dtype=np.float64)
    num_classes = probs.shape[-1]
    if np.ndim(target) == 0:
        weights = soft_targets(np.array([int(target)]), num_classes)[0]
    else:
        weights = soft_targets(np.asarray(target, dtype=np.float64)[None, :], num_classes)[0]
    support = weights > 0
    with np.errstate(divide="ignore"):
        return float(-(weights[support] * np.log(probs[support])).sum())


class Classifier:
    """Layer stack realizing F and its parameter store."""

    def __init__(self, architecture: Architecture, layers: list[Layer], provenance: Provenance | None = None):
        self.architecture = architecture
        self.layers = layers
        self.provenance = provenance or Provenance()

    @classmethod
    def build(cls, architecture: Architecture, seed: int, dtype=np.float32) -> Classifier:
        rng = np.random.default_rng(seed)
        return cls(architecture, architecture.build_layers(rng, dtype), Provenance(seed=seed))

    @property
    def num_classes(self) -> int:
        return self.architecture.num_classes

    @property
    def input_shape(self) -> tuple[int, ...]:
        return self.architecture.input_shape

    @property
    def dtype(self) -> np.dtype:
        return self.parameters()[0][1].dtype

    # -- parameter store -----------------------------------------------

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [
            (f"{index}.{key}", tensor)
            for index, layer in enumerate(self.layers)
            for key, tensor in layer.parameters().items()
        ]

    @property
    def num_parameters(self) -> int:
        return sum(t.size for _, t in self.parameters())

    def flat_parameters(self) -> np.ndarray:
        return np.concatenate([t.data.ravel() for _, t in self.parameters()])

    def load_flat_parameters(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat)
        if flat.size != self.num_parameters:
            raise RejectedInputError(f"expected {self.num_parameters} parameters, got {flat.size}")
        offset = 0
        for _, tensor in self.parameters():
            chunk = flat[offset : offset + tensor.size]
            tensor.data = chunk.reshape(tensor.shape).astype(tensor.dtype)
            offset += tensor.size

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(t.data)) for _, t in self.parameters())

    def zero_grad(self) -> None:
        for _, tensor in self.parameters():
            tensor.zero_grad()

    def copy(self) -> Classifier:
        return copy.deepcopy(self)

    def astype(self, dtype) -> Classifier:
        clone = self.copy()
        for _, tensor in clone.parameters():
            tensor.data = tensor.data.astype(dtype)
        return clone

    # -- evaluation ----------------------------------------------------

    def _check_input(self, batch: np.ndarray) -> None:
        if batch.ndim != len(self.input_shape) + 1 or tuple(batch.shape[1:]) != self.input_shape:
            raise RejectedInputError(f"expected a batch of shape (N, {', '.join(map(str, self.input_shape))}), got {batch.shape}")

    def logits(self, x: Tensor, track_params: bool = False) -> Tensor:
        """Graph-building forward pass; parameters are tracked only when training."""
        self._check_input(x.data)
        for layer in self.layers:
            x = layer(x, track_params)
        return x

    def forward(self, batch: np.ndarray) -> PredictionBatch:
        """Softmax predictions for a batch; gradient-free and read-only."""
        batch = np.asarray(batch, dtype=self.dtype)
        if batch.size and (batch.min() < -PIXEL_TOLERANCE or batch.max() > 1.0 + PIXEL_TOLERANCE):
            raise RejectedInputError(f"pixel values must lie in [0, 1], got [{batch.min():.4g}, {batch.max():.4g}]")
        with no_grad():
            out = self.logits(Tensor(batch))
        return PredictionBatch.from_logits(out.data)

    def predict(self, batch: np.ndarray) -> np.ndarray:
        return self.forward(batch).labels

    def backward(self, loss: Tensor, inputs: Tensor | None = None) -> Gradients:
        """Backpropagate a scalar loss; raises GradientStateError if nothing was recorded."""
        loss.backward()
        params = {
            name: tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
            for name, tensor in self.parameters()
        }
        return Gradients(params=params, input=None if inputs is None else inputs.grad)

    def input_gradient(
        self,
        batch: np.ndarray,
        targets: np.ndarray,
        transform=None,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Per-example cross-entropy and its gradient w.r.t. the input batch.

        ``transform`` maps the input tensor before the forward pass (e.g. a fixed mixup).
        Parameters stay constant, so this is safe to call from several threads.
        """
        x = Tensor(np.asarray(batch, dtype=self.dtype), requires_grad=True)
        fed = x if transform is None else transform(x)
        losses = softmax_cross_entropy(self.logits(fed), targets, reduction="none")
        losses.sum().backward()
        return losses.data.copy(), x.grad
