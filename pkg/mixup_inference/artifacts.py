"""Artifact persistence: atomic writes, CSV/JSON tables, adversarial-set sidecars."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import struct
import tempfile
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

import numpy as np

from .data import AdversarialTriplet, Dataset
from .errors import CorruptCheckpointError, RejectedInputError

logger = logging.getLogger(__name__)

ADVSET_MAGIC = b"MIXINFAD"
ADVSET_VERSION = 1
# magic, version, record count, image rank, then rank dims and epsilon.
_ADVSET_HEAD = struct.Struct("<8sIQI")


def atomic_write_bytes(path: Path, payload: bytes) -> Path:
    """Write ``payload`` to a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    count = 0
    for row in rows:
        writer.writerow(row)
        count += 1
    atomic_write_bytes(path, buffer.getvalue().encode("utf-8"))
    logger.info(f"Wrote {count} rows: {path}")
    return path


def read_csv(path: Path) -> list[dict[str, str]]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path: Path, payload: Any) -> Path:
    atomic_write_bytes(path, (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode("utf-8"))
    logger.info(f"Wrote JSON: {path}")
    return path


def save_adversarial_set(
    path: Path,
    indices: np.ndarray,
    labels: np.ndarray,
    deltas: np.ndarray,
    epsilon: float,
) -> Path:
    """Persist ``(index, label, δ)`` records; δ is stored as little-endian float32."""
    indices = np.asarray(indices, dtype="<u4")
    labels = np.asarray(labels, dtype="<u2")
    deltas = np.asarray(deltas, dtype="<f4")
    count = len(indices)
    if len(labels) != count or len(deltas) != count:
        raise RejectedInputError(f"record arrays disagree: {count} indices, {len(labels)} labels, {len(deltas)} deltas")
    image_shape = deltas.shape[1:]
    header = _ADVSET_HEAD.pack(ADVSET_MAGIC, ADVSET_VERSION, count, len(image_shape))
    header += struct.pack(f"<{len(image_shape)}I", *image_shape) + struct.pack("<d", epsilon)
    record = np.dtype([("index", "<u4"), ("label", "<u2"), ("delta", "<f4", image_shape)])
    records = np.empty(count, dtype=record)
    records["index"], records["label"], records["delta"] = indices, labels, deltas
    return atomic_write_bytes(path, header + records.tobytes())


def load_adversarial_set(path: Path) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Inverse of :func:`save_adversarial_set`: ``(indices, labels, deltas, epsilon)``."""
    raw = Path(path).read_bytes()
    if len(raw) < _ADVSET_HEAD.size:
        raise CorruptCheckpointError(f"Adversarial set truncated: {path}")
    magic, version, count, rank = _ADVSET_HEAD.unpack_from(raw)
    if magic != ADVSET_MAGIC:
        raise CorruptCheckpointError(f"Not an adversarial-set file (magic {magic!r}): {path}")
    if version != ADVSET_VERSION:
        raise CorruptCheckpointError(f"Unsupported adversarial-set version {version}: {path}")
    offset = _ADVSET_HEAD.size
    dims_end = offset + 4 * rank + 8
    if len(raw) < dims_end:
        raise CorruptCheckpointError(f"Adversarial set truncated: {path}")
    image_shape = struct.unpack_from(f"<{rank}I", raw, offset)
    (epsilon,) = struct.unpack_from("<d", raw, offset + 4 * rank)
    record = np.dtype([("index", "<u4"), ("label", "<u2"), ("delta", "<f4", image_shape)])
    if len(raw) - dims_end != count * record.itemsize:
        raise CorruptCheckpointError(f"Adversarial set length mismatch: {path}")
    records = np.frombuffer(raw, dtype=record, count=count, offset=dims_end)
    return (
        records["index"].astype(np.int64),
        records["label"].astype(np.int64),
        records["delta"].astype(np.float32),
        epsilon,
    )


def save_triplets(path: Path, triplets: list[AdversarialTriplet]) -> Path:
    """Sidecar of an attacked slice; every triplet needs its dataset ``index``."""
    if any(t.index is None or t.delta is None for t in triplets):
        raise RejectedInputError("only indexed adversarial triplets can be persisted")
    epsilon = max((t.epsilon or 0.0) for t in triplets) if triplets else 0.0
    deltas = np.stack([t.delta for t in triplets]) if triplets else np.empty((0, 0))
    return save_adversarial_set(
        path,
        np.array([t.index for t in triplets]),
        np.array([t.y for t in triplets]),
        deltas,
        epsilon,
    )


def load_triplets(path: Path, data: Dataset) -> list[AdversarialTriplet]:
    """Rebuild triplets against the dataset slice the sidecar was written for."""
    indices, labels, deltas, epsilon = load_adversarial_set(path)
    if len(indices) and (indices.max() >= len(data) or deltas.shape[1:] != data.image_shape):
        raise CorruptCheckpointError(f"Adversarial set {path} does not match the evaluation slice")
    triplets = []
    for index, label, delta in zip(indices, labels, deltas):
        if label != data.labels[index]:
            raise CorruptCheckpointError(f"Adversarial set {path}: label mismatch at index {index}")
        x0 = data.images[index]
        x_adv = np.clip(x0 + delta, 0.0, 1.0).astype(x0.dtype)
        triplets.append(AdversarialTriplet.adversarial(x0, x_adv, int(label), epsilon, index=int(index)))
    logger.info(f"Loaded {len(triplets)} adversarial examples (eps={epsilon:.4f}) from {path}")
    return triplets
