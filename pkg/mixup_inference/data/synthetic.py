"""Seeded Gaussian-blob image generator standing in for CIFAR at desk scale."""

from __future__ import annotations

import numpy as np

from ..errors import RejectedInputError
from .datasets import Dataset, Split


def _prototypes(num_classes: int, image_shape: tuple[int, int, int], rng: np.random.Generator) -> np.ndarray:
    channels, height, width = image_shape
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    protos = np.empty((num_classes, *image_shape))
    for label in range(num_classes):
        cy, cx = rng.uniform(0.2, 0.8) * height, rng.uniform(0.2, 0.8) * width
        radius = rng.uniform(0.15, 0.3) * min(height, width)
        bump = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * radius**2))
        signs = rng.choice([-1.0, 1.0], size=channels)
        protos[label] = 0.5 + 0.4 * signs[:, None, None] * bump
    return protos


def gen_synthetic(
    n: int,
    num_classes: int,
    seed: int,
    image_shape: tuple[int, int, int] = (3, 16, 16),
    noise: float = 0.08,
    split: Split = "train",
    prototype_seed: int | None = None,
) -> Dataset:
    """``n`` images with per-class counts differing by at most one.

    Class prototypes come from ``prototype_seed`` (default ``seed``) so train and
    test splits generated with different sample seeds share the same classes.
    """
    if num_classes < 2:
        raise RejectedInputError(f"need at least 2 classes, got {num_classes}")
    if n < num_classes:
        raise RejectedInputError(f"n={n} is smaller than the class count {num_classes}")

    protos = _prototypes(num_classes, image_shape, np.random.default_rng(seed if prototype_seed is None else prototype_seed))
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % num_classes).astype(np.int64)
    images = protos[labels] + noise * rng.standard_normal((n, *image_shape))
    return Dataset(np.clip(images, 0.0, 1.0).astype(np.float32), labels, num_classes, split)
