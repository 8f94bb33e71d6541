"""In-memory labelled image datasets."""

from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass
from typing import Literal

import numpy as np

from ..errors import RejectedInputError

Split = Literal["train", "test"]


@dataclass(frozen=True)
class Dataset:
    """Images ``(N, C, H, W)`` in [0, 1] with integer labels in ``[0, num_classes)``."""

    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: Split = "train"

    def __post_init__(self) -> None:
        if self.images.ndim != 4:
            raise RejectedInputError(f"images must be (N, C, H, W), got shape {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise RejectedInputError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise RejectedInputError(f"labels must lie in [0, {self.num_classes})")
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise RejectedInputError("pixel values must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def subset(self, indices: np.ndarray) -> Dataset:
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.images[indices], self.labels[indices], self.num_classes, self.split)

    def head(self, count: int) -> Dataset:
        return self.subset(np.arange(min(count, len(self))))

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def split_holdout(self, per_label: int, seed: int) -> tuple[Dataset, Dataset]:
        """Carve ``per_label`` examples of every class off as a held-out slice.

        Returns ``(remaining, held_out)``; the held-out slice feeds the sample pool
        and is never trained on.
        """
        rng = np.random.default_rng(seed)
        held: list[np.ndarray] = []
        for label in range(self.num_classes):
            members = np.flatnonzero(self.labels == label)
            take = min(per_label, len(members))
            held.append(rng.choice(members, size=take, replace=False))
        held_idx = np.sort(np.concatenate(held)) if held else np.empty(0, dtype=np.int64)
        keep = np.setdiff1d(np.arange(len(self)), held_idx)
        return self.subset(keep), self.subset(held_idx)

    def batches(self, batch_size: int, rng: np.random.Generator | None = None) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        order = np.arange(len(self)) if rng is None else rng.permutation(len(self))
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            yield self.images[idx], self.labels[idx]
