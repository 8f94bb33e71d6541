import numpy as np
import pytest

from mixup_inference.config import ArchitectureKind
from mixup_inference.data import Dataset, SamplePool, build_sample_pool, gen_synthetic
from mixup_inference.nn import Architecture, Classifier


def numeric_gradient(f, array: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central differences of the scalar ``f()`` w.r.t. ``array``, perturbed in place."""
    grad = np.zeros_like(array, dtype=np.float64)
    for idx in np.ndindex(array.shape):
        orig = array[idx]
        array[idx] = orig + eps
        plus = f()
        array[idx] = orig - eps
        minus = f()
        array[idx] = orig
        grad[idx] = (plus - minus) / (2 * eps)
    return grad


@pytest.fixture
def tiny_data() -> Dataset:
    data = gen_synthetic(60, 3, seed=0, image_shape=(2, 4, 4), noise=0.05)
    return Dataset(data.images.astype(np.float64), data.labels, data.num_classes)


@pytest.fixture
def mlp(tiny_data) -> Classifier:
    architecture = Architecture(ArchitectureKind.MLP, tiny_data.image_shape, tiny_data.num_classes, hidden=(8,))
    return Classifier.build(architecture, seed=1, dtype=np.float64)


@pytest.fixture
def cnn(tiny_data) -> Classifier:
    architecture = Architecture(
        ArchitectureKind.CNN,
        tiny_data.image_shape,
        tiny_data.num_classes,
        conv_channels=(3,),
        hidden=(5,),
        kernel_size=3,
    )
    return Classifier.build(architecture, seed=2, dtype=np.float64)


@pytest.fixture
def pool(tiny_data) -> SamplePool:
    return build_sample_pool(tiny_data, per_label=4, seed=0)
