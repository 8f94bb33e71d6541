from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .classifier import (
    Architecture,
    Classifier,
    Gradients,
    PredictionBatch,
    PredictionVector,
    Provenance,
    cross_entropy,
    softmax_cross_entropy,
)
from .tensor import Tensor, no_grad

__all__ = [
    "Architecture",
    "Checkpoint",
    "Classifier",
    "Gradients",
    "PredictionBatch",
    "PredictionVector",
    "Provenance",
    "Tensor",
    "cross_entropy",
    "load_checkpoint",
    "no_grad",
    "save_checkpoint",
    "softmax_cross_entropy",
]
