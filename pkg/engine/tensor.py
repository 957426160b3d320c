"""Tensor value type and the reverse-mode gradient tape."""

import itertools
import logging
from contextlib import contextmanager
from typing import Any, Callable, Iterator, Optional, Sequence, Union

import numpy as np

from engine import profiler

# Configure logging
logger = logging.getLogger(__name__)


# Custom Exceptions
class DimensionError(ValueError):
    """Raised when tensor shapes do not conform for an operation."""
    pass


class UsageError(Exception):
    """Raised when the engine is called outside its contract."""
    pass


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
Scalar = Union[int, float]

_grad_enabled = True
_sequence = itertools.count()


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled() -> bool:
    return _grad_enabled


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """
    Dense row-major array that optionally records the operations producing it.

    Float arrays keep their dtype; anything else (Python lists, ints) is stored as
    float32, the training precision. Oracle and gradient checks pass float64 arrays.
    """

    def __init__(self, data: Any, requires_grad: bool = False, dtype: Any = None) -> None:
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None and isinstance(data, np.ndarray) and np.issubdtype(data.dtype, np.floating):
            array = data
        else:
            array = np.asarray(data, dtype=dtype or np.float32)
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._backward: Optional[BackwardFn] = None
        self._op = 'leaf'
        self._seq = next(_sequence)

    @classmethod
    def from_op(
        cls,
        data: np.ndarray,
        parents: Sequence["Tensor"],
        backward_fn: BackwardFn,
        op: str,
    ) -> "Tensor":
        """Wrap an op result, linking it into the graph when any parent needs grad."""
        out = cls(data)
        out._op = op
        if _grad_enabled and any(parent.requires_grad for parent in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward_fn
        return out

    # Introspection

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float('nan')

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self._op}, requires_grad={self.requires_grad})"

    # Elementwise arithmetic

    def _lift(self, other: Union["Tensor", Scalar]) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    def __add__(self, other: Union["Tensor", Scalar]) -> "Tensor":
        other = self._lift(other)
        a, b = self, other
        data = a.data + b.data
        profiler.record('elementwise', data.size)

        def _backward(grad: np.ndarray) -> tuple:
            return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)

        return Tensor.from_op(data, (a, b), _backward, 'add')

    __radd__ = __add__

    def __sub__(self, other: Union["Tensor", Scalar]) -> "Tensor":
        other = self._lift(other)
        a, b = self, other
        data = a.data - b.data
        profiler.record('elementwise', data.size)

        def _backward(grad: np.ndarray) -> tuple:
            return _unbroadcast(grad, a.shape), _unbroadcast(-grad, b.shape)

        return Tensor.from_op(data, (a, b), _backward, 'sub')

    def __rsub__(self, other: Scalar) -> "Tensor":
        return self._lift(other) - self

    def __mul__(self, other: Union["Tensor", Scalar]) -> "Tensor":
        other = self._lift(other)
        a, b = self, other
        data = a.data * b.data
        profiler.record('elementwise', data.size)

        def _backward(grad: np.ndarray) -> tuple:
            return _unbroadcast(grad * b.data, a.shape), _unbroadcast(grad * a.data, b.shape)

        return Tensor.from_op(data, (a, b), _backward, 'mul')

    __rmul__ = __mul__

    def __truediv__(self, other: Union["Tensor", Scalar]) -> "Tensor":
        other = self._lift(other)
        a, b = self, other
        data = a.data / b.data
        profiler.record('elementwise', data.size)

        def _backward(grad: np.ndarray) -> tuple:
            return (
                _unbroadcast(grad / b.data, a.shape),
                _unbroadcast(-grad * a.data / (b.data * b.data), b.shape),
            )

        return Tensor.from_op(data, (a, b), _backward, 'div')

    def __neg__(self) -> "Tensor":
        a = self
        profiler.record('elementwise', a.size)
        return Tensor.from_op(-a.data, (a,), lambda grad: (-grad,), 'neg')

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from engine.ops import matmul
        return matmul(self, other)

    # Unary maps

    def abs(self) -> "Tensor":
        a = self
        profiler.record('elementwise', a.size)
        return Tensor.from_op(np.abs(a.data), (a,), lambda grad: (grad * np.sign(a.data),), 'abs')

    def exp(self) -> "Tensor":
        a = self
        data = np.exp(a.data)
        profiler.record('elementwise', a.size)
        return Tensor.from_op(data, (a,), lambda grad: (grad * data,), 'exp')

    def clamp_max(self, limit: float) -> "Tensor":
        a = self
        data = np.minimum(a.data, limit)
        profiler.record('elementwise', a.size)
        return Tensor.from_op(data, (a,), lambda grad: (grad * (a.data <= limit),), 'clamp_max')

    # Reductions

    def sum(self, axis: Optional[Union[int, tuple]] = None, keepdims: bool = False) -> "Tensor":
        a = self
        data = np.asarray(a.data.sum(axis=axis, keepdims=keepdims))
        profiler.record('elementwise', a.size)

        def _backward(grad: np.ndarray) -> tuple:
            if axis is not None and not keepdims:
                grad = np.expand_dims(grad, axis)
            return (np.broadcast_to(grad, a.shape).copy(),)

        return Tensor.from_op(data, (a,), _backward, 'sum')

    def mean(self, axis: Optional[Union[int, tuple]] = None, keepdims: bool = False) -> "Tensor":
        total = self.sum(axis=axis, keepdims=keepdims)
        count = self.size // max(total.size, 1)
        return total * (1.0 / count)

    # Shape maps (bijections, exact in both directions)

    def reshape(self, *shape: Any) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        try:
            data = a.data.reshape(shape)
        except ValueError as e:
            logger.error(f"Cannot reshape {a.shape} to {shape}")
            raise DimensionError(f"Cannot reshape {a.shape} to {shape}") from e
        return Tensor.from_op(data, (a,), lambda grad: (grad.reshape(a.shape),), 'reshape')

    def permute(self, *axes: int) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        a = self
        if sorted(axes) != list(range(a.ndim)):
            raise DimensionError(f"Invalid permutation {axes} for shape {a.shape}")
        inverse = tuple(np.argsort(axes))
        data = a.data.transpose(axes)
        return Tensor.from_op(data, (a,), lambda grad: (grad.transpose(inverse),), 'permute')

    def swap_last(self) -> "Tensor":
        axes = list(range(self.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
        return self.permute(axes)


def backward(loss: Tensor) -> dict:
    """
    Run reverse-mode accumulation from a scalar loss.

    Nodes are visited once each in reverse creation order; a tensor consumed k
    times receives the sum of its k contributions.

    Args:
        loss: Scalar tensor reachable from tensors with requires_grad

    Returns:
        Mapping from each reached leaf tensor to its gradient array

    Raises:
        UsageError: If loss is not scalar or does not depend on any grad tensor
    """
    if loss.size != 1:
        logger.error(f"backward() called on non-scalar tensor of shape {loss.shape}")
        raise UsageError(f"Loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        logger.error("backward() called on a tensor with no recorded graph")
        raise UsageError("Loss does not depend on any tensor that requires grad")

    nodes = []
    seen = set()
    stack = [loss]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        nodes.append(node)
        stack.extend(parent for parent in node._parents if parent.requires_grad)
    nodes.sort(key=lambda node: node._seq, reverse=True)

    pending = {id(loss): np.ones_like(loss.data)}
    leaf_grads = {}
    for node in nodes:
        grad = pending.pop(id(node), None)
        if grad is None:
            continue
        if node._backward is None:
            node.grad = grad.copy() if node.grad is None else node.grad + grad
            leaf_grads[node] = grad
            continue
        for parent, parent_grad in zip(node._parents, node._backward(grad)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = pending[key] + parent_grad if key in pending else parent_grad

    logger.debug(f"Backward visited {len(nodes)} nodes, {len(leaf_grads)} leaves")
    return leaf_grads
