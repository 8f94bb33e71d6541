import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import numeric_gradient
from mixup_inference.errors import GradientStateError, RejectedInputError
from mixup_inference.nn import Tensor, no_grad, softmax_cross_entropy
from mixup_inference.nn.layers import Conv2d, Linear, MaxPool2d, ReLU
from mixup_inference.nn.tensor import conv2d, max_pool2d


def make_layer(kind: str, rng: np.random.Generator):
    if kind == "linear":
        return Linear(6, 4, rng, np.float64), rng.standard_normal((3, 6))
    if kind == "conv":
        return Conv2d(2, 3, 3, rng, np.float64), rng.standard_normal((2, 2, 4, 4))
    if kind == "relu":
        return ReLU(), rng.standard_normal((3, 5))
    return MaxPool2d(2), rng.standard_normal((2, 2, 4, 4))


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("kind", ["linear", "conv", "relu", "maxpool"])
def test_layer_gradients_match_finite_differences(kind, seed):
    rng = np.random.default_rng(seed)
    layer, x_data = make_layer(kind, rng)
    with no_grad():
        out_shape = layer(Tensor(x_data)).shape
    proj = rng.standard_normal(out_shape)

    def scalar() -> float:
        with no_grad():
            return float((layer(Tensor(x_data)) * proj).sum().data)

    x = Tensor(x_data, requires_grad=True)
    (layer(x, track_params=True) * proj).sum().backward()

    assert_allclose(x.grad, numeric_gradient(scalar, x_data), rtol=1e-4, atol=1e-6)
    for tensor in layer.parameters().values():
        assert_allclose(tensor.grad, numeric_gradient(scalar, tensor.data), rtol=1e-4, atol=1e-6)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("soft", [False, True])
def test_cross_entropy_gradient(seed, soft):
    rng = np.random.default_rng(seed)
    logits = rng.standard_normal((4, 5))
    targets = rng.dirichlet(np.ones(5), size=4) if soft else rng.integers(5, size=4)

    def scalar() -> float:
        with no_grad():
            return float(softmax_cross_entropy(Tensor(logits), targets).data)

    x = Tensor(logits, requires_grad=True)
    softmax_cross_entropy(x, targets).backward()
    assert_allclose(x.grad, numeric_gradient(scalar, logits), rtol=1e-4, atol=1e-7)


def test_gradient_accumulates_over_shared_inputs():
    x = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
    (x * x + x).sum().backward()
    assert_allclose(x.grad, 2 * x.data + 1)


def test_backward_without_graph_raises():
    with pytest.raises(GradientStateError):
        Tensor(np.ones(3)).backward()


def test_backward_on_vector_needs_explicit_gradient():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(GradientStateError):
        (x * 2.0).backward()


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = (x * 2.0).sum()
    assert not y.requires_grad
    with pytest.raises(GradientStateError):
        y.backward()


def test_conv2d_rejects_channel_mismatch():
    rng = np.random.default_rng(0)
    weight = Tensor(rng.standard_normal((3, 2, 3, 3)))
    bias = Tensor(np.zeros(3))
    with pytest.raises(RejectedInputError):
        conv2d(Tensor(np.zeros((1, 4, 5, 5))), weight, bias, padding=1)


def test_conv2d_same_padding_keeps_spatial_shape():
    rng = np.random.default_rng(0)
    out = conv2d(Tensor(rng.random((2, 2, 6, 6))), Tensor(rng.standard_normal((4, 2, 3, 3))), Tensor(np.zeros(4)), 1)
    assert out.shape == (2, 4, 6, 6)


def test_max_pool_rejects_odd_spatial_dims():
    with pytest.raises(RejectedInputError):
        max_pool2d(Tensor(np.zeros((1, 1, 3, 4))))


def test_max_pool_routes_gradient_to_winner():
    x = Tensor(np.array([[[[1.0, 4.0], [2.0, 3.0]]]]), requires_grad=True)
    max_pool2d(x).sum().backward()
    assert_allclose(x.grad, [[[[0.0, 1.0], [0.0, 0.0]]]])
