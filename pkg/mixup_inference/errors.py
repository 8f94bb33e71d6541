"""Exception hierarchy."""

from __future__ import annotations


class LabError(Exception):
    """Base class for every error raised by the laboratory."""


class RejectedInputError(LabError, ValueError):
    """An argument violates an operation's precondition."""


class GradientStateError(LabError, RuntimeError):
    """Backward was requested without a recorded forward pass."""


class CorruptCheckpointError(LabError, ValueError):
    """A binary artifact has a bad header, version or length."""


class DatasetFormatError(LabError, ValueError):
    """A dataset file does not follow the CIFAR binary layout."""


class PoolConstructionError(LabError, ValueError):
    """Not enough clean examples to fill a sample-pool bucket."""


class MIConfigurationError(LabError, ValueError):
    """A mixup-inference configuration cannot be served by the given pool or label space."""


class TrainingDivergedError(LabError, RuntimeError):
    """Loss or parameters became non-finite during training."""


class EmptyEvaluationError(LabError, RuntimeError):
    """Nothing is left to evaluate after filtering."""
