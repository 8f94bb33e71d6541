"""Checkpoint persistence.

Little-endian layout::

    magic        8 bytes   b"MIXINFCK"
    version      uint32
    arch_len     uint32    followed by the architecture descriptor (utf-8)
    method_len   uint32    followed by the training-method tag (utf-8)
    seed         int64
    epochs       uint32
    width        uint8     bytes per parameter value (4 = float32, 8 = float64)
    count        uint64    number of parameter values
    values       count * width bytes
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..artifacts import atomic_write_bytes
from ..errors import CorruptCheckpointError
from .classifier import Architecture, Classifier, Provenance

MAGIC = b"MIXINFCK"
VERSION = 1
_WIDTH_DTYPES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}


@dataclass(frozen=True)
class Checkpoint:
    architecture: str
    parameters: np.ndarray
    method: str
    seed: int
    epochs: int


def header_size(architecture: str, method: str) -> int:
    """Bytes before the parameter values."""
    return 8 + 4 + 4 + len(architecture.encode()) + 4 + len(method.encode()) + 8 + 4 + 1 + 8


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    values = np.ascontiguousarray(checkpoint.parameters)
    dtype = _WIDTH_DTYPES[values.dtype.itemsize]
    arch = checkpoint.architecture.encode()
    method = checkpoint.method.encode()
    header = (
        MAGIC
        + struct.pack("<I", VERSION)
        + struct.pack("<I", len(arch))
        + arch
        + struct.pack("<I", len(method))
        + method
        + struct.pack("<qIBQ", checkpoint.seed, checkpoint.epochs, dtype.itemsize, values.size)
    )
    return header + values.astype(dtype).tobytes()


def decode_checkpoint(raw: bytes, source: str = "<bytes>") -> Checkpoint:
    def take(offset: int, size: int) -> bytes:
        if offset + size > len(raw):
            raise CorruptCheckpointError(f"Checkpoint truncated at byte {offset}: {source}")
        return raw[offset : offset + size]

    def text(offset: int, size: int, what: str) -> str:
        try:
            return take(offset, size).decode()
        except UnicodeDecodeError as e:
            raise CorruptCheckpointError(f"Checkpoint {what} is not UTF-8: {source}") from e

    if take(0, 8) != MAGIC:
        raise CorruptCheckpointError(f"Not a checkpoint (bad magic): {source}")
    (version,) = struct.unpack("<I", take(8, 4))
    if version != VERSION:
        raise CorruptCheckpointError(f"Checkpoint version {version} != supported {VERSION}: {source}")
    offset = 12
    (arch_len,) = struct.unpack("<I", take(offset, 4))
    arch = text(offset + 4, arch_len, "architecture")
    offset += 4 + arch_len
    (method_len,) = struct.unpack("<I", take(offset, 4))
    method = text(offset + 4, method_len, "method")
    offset += 4 + method_len
    seed, epochs, width, count = struct.unpack("<qIBQ", take(offset, 21))
    offset += 21
    if width not in _WIDTH_DTYPES:
        raise CorruptCheckpointError(f"Unsupported value width {width}: {source}")
    if len(raw) != offset + count * width:
        raise CorruptCheckpointError(
            f"Checkpoint holds {len(raw) - offset} value bytes, expected {count * width}: {source}"
        )
    values = np.frombuffer(raw, dtype=_WIDTH_DTYPES[width], count=count, offset=offset)
    return Checkpoint(architecture=arch, parameters=values.astype(values.dtype.newbyteorder("=")), method=method, seed=seed, epochs=epochs)


def save_checkpoint(model: Classifier, path: Path) -> Path:
    """Write parameters and provenance atomically to ``path``."""
    checkpoint = Checkpoint(
        architecture=model.architecture.describe(),
        parameters=model.flat_parameters(),
        method=model.provenance.method,
        seed=model.provenance.seed,
        epochs=model.provenance.epochs,
    )
    return atomic_write_bytes(path, encode_checkpoint(checkpoint))


def load_checkpoint(path: Path) -> Classifier:
    """Rebuild the classifier stored at ``path``; any inconsistency raises CorruptCheckpointError."""
    checkpoint = decode_checkpoint(Path(path).read_bytes(), str(path))
    architecture = Architecture.parse(checkpoint.architecture)
    model = Classifier.build(architecture, seed=0, dtype=checkpoint.parameters.dtype)
    if model.num_parameters != checkpoint.parameters.size:
        raise CorruptCheckpointError(
            f"Architecture {checkpoint.architecture!r} needs {model.num_parameters} values, "
            f"checkpoint has {checkpoint.parameters.size}: {path}"
        )
    model.load_flat_parameters(checkpoint.parameters)
    model.provenance = Provenance(method=checkpoint.method, seed=checkpoint.seed, epochs=checkpoint.epochs)
    return model
