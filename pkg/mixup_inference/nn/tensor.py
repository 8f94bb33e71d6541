"""Reverse-mode differentiable array for the layer zoo.

Each operation builds a node holding its parents and a closure that pushes the
upstream gradient back to them; ``backward`` walks the graph in reverse
topological order. Only the operations the layers need are provided.
"""

from __future__ import annotations

import threading
from collections.abc import Callable, Iterator
from contextlib import contextmanager

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import log_softmax as _log_softmax
from scipy.special import softmax as _softmax

from ..errors import GradientStateError, RejectedInputError

_state = threading.local()


def is_grad_enabled() -> bool:
    """Whether operations on this thread record the graph."""
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording on the current thread."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A dense real array with an optional gradient tape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(
        self,
        data: np.ndarray | float,
        requires_grad: bool = False,
        _parents: tuple[Tensor, ...] = (),
        _op: str = "",
    ):
        array = np.asarray(data)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float64)
        self.data = array
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward: Callable[[np.ndarray], None] | None = None
        self._op = _op

    # -- shape metadata -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def flat(self) -> np.ndarray:
        return self.data.ravel()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}, op={self._op!r})"

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    # -- graph construction --------------------------------------------

    @staticmethod
    def _lift(value: Tensor | np.ndarray | float, like: Tensor) -> Tensor:
        if isinstance(value, Tensor):
            return value
        return Tensor(np.asarray(value, dtype=like.dtype))

    def _child(self, data: np.ndarray, parents: tuple[Tensor, ...], op: str, backward) -> Tensor:
        track = is_grad_enabled() and any(p.requires_grad for p in parents)
        out = Tensor(data, requires_grad=track, _parents=parents if track else (), _op=op)
        if track:
            out._backward = backward
        return out

    def _accumulate(self, grad: np.ndarray) -> None:
        if not self.requires_grad:
            return
        self.grad = grad.copy() if self.grad is None else self.grad + grad

    # -- elementwise ---------------------------------------------------

    def __add__(self, other: Tensor | np.ndarray | float) -> Tensor:
        other = self._lift(other, self)

        def backward(g: np.ndarray) -> None:
            self._accumulate(_unbroadcast(g, self.shape))
            other._accumulate(_unbroadcast(g, other.shape))

        return self._child(self.data + other.data, (self, other), "+", backward)

    __radd__ = __add__

    def __neg__(self) -> Tensor:
        return self * -1.0

    def __sub__(self, other: Tensor | np.ndarray | float) -> Tensor:
        return self + (-self._lift(other, self))

    def __rsub__(self, other: Tensor | np.ndarray | float) -> Tensor:
        return self._lift(other, self) + (-self)

    def __mul__(self, other: Tensor | np.ndarray | float) -> Tensor:
        other = self._lift(other, self)

        def backward(g: np.ndarray) -> None:
            self._accumulate(_unbroadcast(g * other.data, self.shape))
            other._accumulate(_unbroadcast(g * self.data, other.shape))

        return self._child(self.data * other.data, (self, other), "*", backward)

    __rmul__ = __mul__

    def __pow__(self, exponent: float) -> Tensor:
        def backward(g: np.ndarray) -> None:
            self._accumulate(g * exponent * self.data ** (exponent - 1))

        return self._child(self.data**exponent, (self,), f"**{exponent}", backward)

    def relu(self) -> Tensor:
        mask = self.data > 0

        def backward(g: np.ndarray) -> None:
            self._accumulate(g * mask)

        return self._child(np.where(mask, self.data, 0).astype(self.dtype), (self,), "relu", backward)

    # -- reductions and shape ------------------------------------------

    def sum(self, axis: int | tuple[int, ...] | None = None) -> Tensor:
        def backward(g: np.ndarray) -> None:
            if axis is not None:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.shape))

        return self._child(np.asarray(self.data.sum(axis=axis)), (self,), "sum", backward)

    def mean(self, axis: int | None = None) -> Tensor:
        count = self.size if axis is None else self.shape[axis]
        return self.sum(axis=axis) * (1.0 / count)

    def reshape(self, *shape: int) -> Tensor:
        def backward(g: np.ndarray) -> None:
            self._accumulate(g.reshape(self.shape))

        return self._child(self.data.reshape(*shape), (self,), "reshape", backward)

    # -- linear algebra ------------------------------------------------

    def __matmul__(self, other: Tensor) -> Tensor:
        def backward(g: np.ndarray) -> None:
            self._accumulate(g @ other.data.T)
            other._accumulate(self.data.T @ g)

        return self._child(self.data @ other.data, (self, other), "@", backward)

    def log_softmax(self) -> Tensor:
        """Log-softmax over the last axis."""
        out = _log_softmax(self.data, axis=-1)

        def backward(g: np.ndarray) -> None:
            self._accumulate(g - np.exp(out) * g.sum(axis=-1, keepdims=True))

        return self._child(out, (self,), "log_softmax", backward)

    def softmax(self) -> np.ndarray:
        return _softmax(self.data, axis=-1)

    # -- backpropagation -----------------------------------------------

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Propagate ``grad`` (default 1 for a scalar) to every tracked ancestor."""
        if not self.requires_grad:
            raise GradientStateError(f"no recorded forward pass behind {self!r}")
        if grad is None:
            if self.size != 1:
                raise GradientStateError(f"backward on a non-scalar of shape {self.shape} needs an explicit gradient")
            grad = np.ones_like(self.data)

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            stack.extend((parent, False) for parent in node._parents if parent.requires_grad)

        for node in order:
            if node._backward is not None:
                node.grad = None
        self._accumulate(np.asarray(grad, dtype=self.dtype))
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            node._backward(node.grad)
            # Interior gradients are transient; leaves keep theirs.
            node.grad = None


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, padding: int) -> Tensor:
    """Stride-1 2-D cross-correlation of ``(N, C, H, W)`` with ``(O, C, k, k)``."""
    k = weight.shape[-1]
    if x.data.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise RejectedInputError(f"conv2d expects (N, {weight.shape[1]}, H, W), got {x.shape}")
    padded = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(padded, (k, k), axis=(2, 3))  # N, C, H', W', k, k
    out = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    out = out + bias.data[None, :, None, None]
    height, width = out.shape[2], out.shape[3]

    def backward(g: np.ndarray) -> None:
        if weight.requires_grad:
            weight._accumulate(np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3])))
        bias._accumulate(g.sum(axis=(0, 2, 3)))
        if not x.requires_grad:
            return
        grad_padded = np.zeros_like(padded)
        for i in range(k):
            for j in range(k):
                grad_padded[:, :, i : i + height, j : j + width] += np.einsum(
                    "nohw,oc->nchw", g, weight.data[:, :, i, j]
                )
        h_end = grad_padded.shape[2] - padding
        w_end = grad_padded.shape[3] - padding
        x._accumulate(grad_padded[:, :, padding:h_end, padding:w_end])

    return x._child(np.ascontiguousarray(out), (x, weight, bias), "conv2d", backward)


def max_pool2d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping max pooling; ties resolve to the lowest window index."""
    n, c, h, w = x.shape
    if h % size or w % size:
        raise RejectedInputError(f"max_pool2d needs spatial dims divisible by {size}, got {x.shape}")
    blocks = (
        x.data.reshape(n, c, h // size, size, w // size, size)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h // size, w // size, size * size)
    )
    winner = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, winner[..., None], axis=-1)[..., 0]

    def backward(g: np.ndarray) -> None:
        routed = np.zeros_like(blocks)
        np.put_along_axis(routed, winner[..., None], g[..., None], axis=-1)
        grad = (
            routed.reshape(n, c, h // size, w // size, size, size)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, h, w)
        )
        x._accumulate(grad)

    return x._child(out, (x,), "max_pool2d", backward)
