"""CIFAR-10 / CIFAR-100 binary-format readers."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from ..errors import DatasetFormatError
from .datasets import Dataset, Split

logger = logging.getLogger(__name__)

IMAGE_SHAPE = (3, 32, 32)
PIXELS = 3 * 32 * 32
CIFAR10_RECORD = 1 + PIXELS
CIFAR100_RECORD = 2 + PIXELS


def _decode(raw: bytes, record: int, label_offset: int, num_classes: int, source: str, split: Split) -> Dataset:
    if len(raw) % record:
        raise DatasetFormatError(f"{source}: {len(raw)} bytes is not a multiple of the {record}-byte record")
    rows = np.frombuffer(raw, dtype=np.uint8).reshape(-1, record)
    labels = rows[:, label_offset].astype(np.int64)
    if labels.size and labels.max() >= num_classes:
        bad = int(np.flatnonzero(labels >= num_classes)[0])
        raise DatasetFormatError(f"{source}: record {bad} has label byte {labels[bad]} >= {num_classes}")
    images = (rows[:, record - PIXELS :].astype(np.float32) / 255.0).reshape(-1, *IMAGE_SHAPE)
    logger.debug(f"Decoded {len(labels)} records from {source}")
    return Dataset(images, labels, num_classes, split)


def load_cifar10(path: Path, split: Split = "train") -> Dataset:
    """One label byte then 3072 channel-major pixel bytes per record."""
    path = Path(path)
    return _decode(path.read_bytes(), CIFAR10_RECORD, 0, 10, str(path), split)


def load_cifar100(path: Path, split: Split = "train") -> Dataset:
    """Coarse and fine label bytes then pixels; the fine label is kept."""
    path = Path(path)
    return _decode(path.read_bytes(), CIFAR100_RECORD, 1, 100, str(path), split)


def load_cifar_dir(directory: Path, fine: bool = False) -> tuple[Dataset, Dataset]:
    """Read the standard extracted layout of the binary distribution.

    CIFAR-10: ``data_batch_{1..5}.bin`` and ``test_batch.bin``.
    CIFAR-100: ``train.bin`` and ``test.bin``.
    """
    directory = Path(directory)
    if fine:
        return load_cifar100(directory / "train.bin", "train"), load_cifar100(directory / "test.bin", "test")

    batches = sorted(directory.glob("data_batch_*.bin"))
    if not batches:
        raise DatasetFormatError(f"No data_batch_*.bin files in {directory}")
    parts = [load_cifar10(p, "train") for p in batches]
    train = Dataset(
        np.concatenate([p.images for p in parts]),
        np.concatenate([p.labels for p in parts]),
        10,
        "train",
    )
    return train, load_cifar10(directory / "test_batch.bin", "test")
