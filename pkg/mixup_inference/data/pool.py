"""Clean sample pool realizing p_s(x, y) and label distributions over it."""

from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np

from ..errors import MIConfigurationError, PoolConstructionError, RejectedInputError
from .datasets import Dataset


@dataclass(frozen=True)
class LabelDistribution:
    """Probability vector over ``[0, L)``."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size < 1:
            raise RejectedInputError(f"label distribution must be a non-empty vector, got shape {probs.shape}")
        if np.any(probs < 0) or not np.isclose(probs.sum(), 1.0, atol=1e-9):
            raise RejectedInputError("label distribution must be non-negative and sum to 1 (empty support?)")
        object.__setattr__(self, "probs", probs)

    @classmethod
    def dirac(cls, label: int, num_classes: int) -> LabelDistribution:
        probs = np.zeros(num_classes)
        probs[label] = 1.0
        return cls(probs)

    @classmethod
    def uniform(cls, num_classes: int, exclude: int | None = None) -> LabelDistribution:
        probs = np.ones(num_classes)
        if exclude is not None:
            probs[exclude] = 0.0
        return cls(probs / probs.sum())

    @property
    def num_classes(self) -> int:
        return self.probs.size

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs > 0)

    def sample(self, rng: np.random.Generator, size: int | None = None) -> int | np.ndarray:
        draw = rng.choice(self.num_classes, size=size, p=self.probs)
        return int(draw) if size is None else draw

    def expectation(self, values: np.ndarray) -> float:
        """E[v(y_s)] for a per-label value vector."""
        return float(self.probs @ np.asarray(values, dtype=np.float64))


@dataclass(frozen=True)
class SamplePool:
    """Per-label buckets of held-out clean images. Immutable after construction."""

    buckets: dict[int, np.ndarray]
    marginal: LabelDistribution

    @property
    def num_classes(self) -> int:
        return self.marginal.num_classes

    @property
    def size(self) -> int:
        return sum(len(b) for b in self.buckets.values())

    @property
    def image_shape(self) -> tuple[int, ...]:
        return next(iter(self.buckets.values())).shape[1:]

    def require(self, dist: LabelDistribution) -> None:
        """Raise unless every label in the support of ``dist`` has a non-empty bucket."""
        if dist.num_classes != self.num_classes:
            raise MIConfigurationError(f"label distribution over {dist.num_classes} classes, pool has {self.num_classes}")
        missing = [int(k) for k in dist.support if len(self.buckets.get(int(k), ())) == 0]
        if missing:
            raise MIConfigurationError(f"sample pool has no clean examples for labels {missing}")

    def enumerate(self, dist: LabelDistribution) -> Iterator[tuple[float, int, np.ndarray]]:
        """Every pool entry under ``dist`` as ``(weight, y_s, x_s)``; weights sum to 1."""
        self.require(dist)
        for label in dist.support:
            bucket = self.buckets[int(label)]
            weight = dist.probs[label] / len(bucket)
            for image in bucket:
                yield float(weight), int(label), image


def build_sample_pool(
    data: Dataset,
    per_label: int,
    seed: int,
    marginal: LabelDistribution | None = None,
) -> SamplePool:
    """Fill one bucket per supported label by seeded sampling without replacement."""
    marginal = marginal or LabelDistribution.uniform(data.num_classes)
    if marginal.num_classes != data.num_classes:
        raise PoolConstructionError(f"marginal covers {marginal.num_classes} classes, dataset has {data.num_classes}")
    rng = np.random.default_rng(seed)
    buckets: dict[int, np.ndarray] = {}
    for label in marginal.support:
        members = np.flatnonzero(data.labels == label)
        if len(members) < per_label:
            raise PoolConstructionError(f"label {label} has {len(members)} clean examples, need {per_label}")
        chosen = np.sort(rng.choice(members, size=per_label, replace=False))
        buckets[int(label)] = data.images[chosen]
    return SamplePool(buckets=buckets, marginal=marginal)


def sample_from_pool(pool: SamplePool, dist: LabelDistribution, rng: np.random.Generator) -> tuple[int, np.ndarray]:
    """Draw ``y_s ~ dist`` then ``x_s`` uniformly (with replacement) from bucket ``y_s``."""
    pool.require(dist)
    label = dist.sample(rng)
    bucket = pool.buckets[label]
    return label, bucket[rng.integers(len(bucket))]


def sample_many(pool: SamplePool, dist: LabelDistribution, rng: np.random.Generator, count: int) -> tuple[np.ndarray, np.ndarray]:
    """``count`` draws as stacked arrays ``(labels, images)``."""
    pool.require(dist)
    labels = dist.sample(rng, size=count)
    images = np.stack([pool.buckets[int(y)][rng.integers(len(pool.buckets[int(y)]))] for y in labels])
    return labels, images
