"""Layer zoo: affine, convolution, rectifier, pooling, flatten."""

from __future__ import annotations

import numpy as np

from ..errors import RejectedInputError
from .tensor import Tensor, conv2d, max_pool2d


class Layer:
    """A stateless-or-parameterized step of a classifier."""

    name = "layer"

    def parameters(self) -> dict[str, Tensor]:
        return {}

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        return input_shape

    def __call__(self, x: Tensor, track_params: bool = False) -> Tensor:
        return self.forward(x, track_params)

    def forward(self, x: Tensor, track_params: bool) -> Tensor:
        raise NotImplementedError

    def _param(self, key: str, track_params: bool) -> Tensor:
        param = self.parameters()[key]
        # Untracked parameters are constants, so input-gradient passes never write into them.
        return param if track_params else param.detach()


def _he_normal(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype: np.dtype) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Linear(Layer):
    """Affine map ``x @ W + b`` on flat features, He-initialized."""
    name = "linear"

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, dtype=np.float32):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Tensor(_he_normal(rng, (in_features, out_features), in_features, dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(out_features, dtype=dtype), requires_grad=True)

    def parameters(self) -> dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        if input_shape != (self.in_features,):
            raise RejectedInputError(f"linear layer expects ({self.in_features},), got {input_shape}")
        return (self.out_features,)

    def forward(self, x: Tensor, track_params: bool) -> Tensor:
        if x.shape[1:] != (self.in_features,):
            raise RejectedInputError(f"linear layer expects (N, {self.in_features}), got {x.shape}")
        return x @ self._param("weight", track_params) + self._param("bias", track_params)


class Conv2d(Layer):
    """Same-padded 2-D convolution over NCHW batches."""
    name = "conv2d"

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        dtype=np.float32,
    ):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.padding = kernel_size // 2
        fan_in = in_channels * kernel_size * kernel_size
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        self.weight = Tensor(_he_normal(rng, shape, fan_in, dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(out_channels, dtype=dtype), requires_grad=True)

    def parameters(self) -> dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        c, h, w = input_shape
        if c != self.in_channels:
            raise RejectedInputError(f"conv2d expects {self.in_channels} channels, got {c}")
        span = 2 * self.padding - self.kernel_size + 1
        return (self.out_channels, h + span, w + span)

    def forward(self, x: Tensor, track_params: bool) -> Tensor:
        return conv2d(x, self._param("weight", track_params), self._param("bias", track_params), self.padding)


class ReLU(Layer):
    """Elementwise rectifier."""
    name = "relu"

    def forward(self, x: Tensor, track_params: bool) -> Tensor:
        return x.relu()


class MaxPool2d(Layer):
    """Non-overlapping max pooling; spatial dims must divide by ``size``."""
    name = "maxpool"

    def __init__(self, size: int = 2):
        self.size = size

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        c, h, w = input_shape
        if h % self.size or w % self.size:
            raise RejectedInputError(f"pooling needs spatial dims divisible by {self.size}, got {input_shape}")
        return (c, h // self.size, w // self.size)

    def forward(self, x: Tensor, track_params: bool) -> Tensor:
        return max_pool2d(x, self.size)


class Flatten(Layer):
    """Collapse all but the batch axis."""
    name = "flatten"

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        return (int(np.prod(input_shape)),)

    def forward(self, x: Tensor, track_params: bool) -> Tensor:
        return x.reshape(x.shape[0], -1)
