"""Dense float64 tensors with a recording tape for reverse-mode differentiation.

A ``Tape`` is an append-only list of nodes. Every node stores the operation kind, the
handles of its recorded parents, its forward value and a vector-Jacobian product (VJP)
closure. Operations on tensors that carry a node are recorded on the same tape; operations
on plain constants are evaluated eagerly and never recorded.

Tapes are cheap and meant to be rebuilt for every forward pass.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterator, Mapping, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np

from ..exceptions import NonFiniteError, ShapeError, TapeError

logger = logging.getLogger(__name__)

Axis = int | Sequence[int] | None
VJP = Callable[[np.ndarray], Sequence[np.ndarray | None]]

DEFAULT_SLOPE = 0.1


@dataclass(frozen=True)
class Node:
    """A recorded operation."""

    kind: str
    parents: tuple[int | None, ...]
    value: np.ndarray
    vjp: VJP | None


class Tensor:
    """A dense 64-bit float array, optionally recorded on a tape."""

    __slots__ = ("values", "tape", "node")

    def __init__(self, values: Any, *, tape: Tape | None = None, node: int | None = None):
        """Initialize a Tensor.

        Args:
            values: Array-like data, converted to float64.
            tape: Tape the tensor is recorded on, if any.
            node: Node handle on that tape.
        """
        if isinstance(values, Tensor):
            values = values.values
        self.values = np.asarray(values, dtype=np.float64)
        self.tape = tape
        self.node = node

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return int(self.values.size)

    @property
    def is_recorded(self) -> bool:
        return self.tape is not None and self.node is not None

    @property
    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def item(self) -> float:
        """Return the value of a single-element tensor as a float."""
        if self.values.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.values.reshape(()))

    def numpy(self) -> np.ndarray:
        """Return a copy of the values."""
        return self.values.copy()

    def detach(self) -> Tensor:
        """Return an unrecorded tensor sharing these values (stop-gradient)."""
        return Tensor(self.values)

    def __repr__(self) -> str:
        mark = f", node={self.node}" if self.is_recorded else ""
        return f"Tensor(shape={self.shape}{mark})"

    # Operator sugar
    def __add__(self, other: Any) -> Tensor:
        return add(self, other)

    def __radd__(self, other: Any) -> Tensor:
        return add(other, self)

    def __sub__(self, other: Any) -> Tensor:
        return sub(self, other)

    def __rsub__(self, other: Any) -> Tensor:
        return sub(other, self)

    def __mul__(self, other: Any) -> Tensor:
        return mul(self, other)

    def __rmul__(self, other: Any) -> Tensor:
        return mul(other, self)

    def __truediv__(self, other: Any) -> Tensor:
        return div(self, other)

    def __rtruediv__(self, other: Any) -> Tensor:
        return div(other, self)

    def __neg__(self) -> Tensor:
        return neg(self)

    def __matmul__(self, other: Any) -> Tensor:
        return matmul(self, other)


class Gradients(Mapping[int, np.ndarray]):
    """Gradient buffers produced by ``Tape.backward``, keyed by node handle."""

    def __init__(self, tape: Tape, buffers: dict[int, np.ndarray]):
        self._tape = tape
        self._buffers = buffers

    def __getitem__(self, key: int | Tensor) -> np.ndarray:
        if isinstance(key, Tensor):
            if key.tape is not self._tape or key.node is None:
                raise TapeError("Tensor is not recorded on the differentiated tape")
            key = key.node
        if key in self._buffers:
            return self._buffers[key]
        return np.zeros_like(self._tape.nodes[key].value)

    def __iter__(self) -> Iterator[int]:
        return iter(self._buffers)

    def __len__(self) -> int:
        return len(self._buffers)

    def visited(self, tensor: Tensor) -> bool:
        """Whether a gradient buffer exists for the tensor."""
        return tensor.node in self._buffers

    def wrt(self, tensors: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
        """Gradients for a named collection of recorded tensors."""
        return {name: self[t] for name, t in tensors.items()}


class Tape:
    """Append-only record of operations, in topological order."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def watch(self, values: Any) -> Tensor:
        """Record a leaf tensor whose gradient is wanted."""
        value = np.array(Tensor(values).values, dtype=np.float64)
        self.nodes.append(Node("leaf", (), value, None))
        return Tensor(value, tape=self, node=len(self.nodes) - 1)

    def watch_all(self, arrays: Mapping[str, Any]) -> dict[str, Tensor]:
        """Record a named collection of leaves, preserving order."""
        return {name: self.watch(value) for name, value in arrays.items()}

    def record(
        self, kind: str, inputs: Sequence[Tensor], value: np.ndarray, vjp: VJP
    ) -> Tensor:
        """Append an operation node and return its output tensor."""
        parents = tuple(t.node if t.tape is self else None for t in inputs)
        self.nodes.append(Node(kind, parents, value, vjp))
        return Tensor(value, tape=self, node=len(self.nodes) - 1)

    def backward(self, root: Tensor) -> Gradients:
        """Propagate gradients from a scalar root to every node it depends on.

        Args:
            root: Scalar tensor recorded on this tape.

        Returns:
            Gradient buffers; nodes not reached by the root read as zeros.

        Raises:
            TapeError: If the root is not a scalar or is not on this tape.
        """
        if root.tape is not self or root.node is None:
            raise TapeError("backward() root is not recorded on this tape")
        if root.values.size != 1:
            raise TapeError(f"backward() needs a scalar root, got shape {root.shape}")

        buffers: dict[int, np.ndarray] = {root.node: np.ones_like(root.values)}
        for index in range(root.node, -1, -1):
            grad = buffers.get(index)
            if grad is None:
                continue
            node = self.nodes[index]
            if node.vjp is None:
                continue
            for parent, parent_grad in zip(node.parents, node.vjp(grad)):
                if parent is None or parent_grad is None:
                    continue
                if parent in buffers:
                    buffers[parent] = buffers[parent] + parent_grad
                else:
                    buffers[parent] = parent_grad

        logger.debug(f"Backward visited {len(buffers)} of {len(self.nodes)} nodes")
        return Gradients(self, buffers)


# ============================================================================
# Recording helpers
# ============================================================================


def as_tensor(value: Any) -> Tensor:
    """Wrap a value as an unrecorded tensor unless it already is a Tensor."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _shared_tape(inputs: Sequence[Tensor]) -> Tape | None:
    tapes = {id(t.tape): t.tape for t in inputs if t.is_recorded}
    if len(tapes) > 1:
        raise TapeError("Cannot combine tensors recorded on different tapes")
    return next(iter(tapes.values()), None)


def check_finite(kind: str, value: np.ndarray) -> None:
    """Raise NonFiniteError when an op result holds NaN or Inf."""
    if not np.all(np.isfinite(value)):
        bad = int(np.size(value) - np.count_nonzero(np.isfinite(value)))
        raise NonFiniteError(f"{kind} produced {bad} non-finite value(s)")


def primitive(kind: str, inputs: Sequence[Tensor], value: np.ndarray, vjp: VJP) -> Tensor:
    """Wrap a forward value as the output of an operation.

    The result is recorded on the inputs' tape when any input is recorded; otherwise it
    is a plain constant.

    Args:
        kind: Operation name, used in node records and error messages.
        inputs: Operand tensors, in the order the VJP returns gradients.
        value: Forward result.
        vjp: Maps the output gradient to one gradient (or None) per input.

    Returns:
        Output tensor.

    Raises:
        NonFiniteError: If the forward value is not finite.
        TapeError: If the inputs live on different tapes.
    """
    value = np.asarray(value, dtype=np.float64)
    check_finite(kind, value)
    tape = _shared_tape(inputs)
    if tape is None:
        return Tensor(value)
    return tape.record(kind, inputs, value, vjp)


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def broadcast_shape(a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, ...]:
    """Trailing-dimension broadcast of two shapes."""
    try:
        return tuple(np.broadcast_shapes(a, b))
    except ValueError as e:
        raise ShapeError(f"Shapes {a} and {b} are not broadcastable") from e


# ============================================================================
# Elementwise operations
# ============================================================================


def _binary(kind: str, a: Any, b: Any, forward, grads) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    broadcast_shape(a.shape, b.shape)
    with np.errstate(all="ignore"):
        out = forward(a.values, b.values)

    def vjp(g: np.ndarray):
        ga, gb = grads(g, a.values, b.values, out)
        return (
            unbroadcast(ga, a.shape) if a.is_recorded else None,
            unbroadcast(gb, b.shape) if b.is_recorded else None,
        )

    return primitive(kind, (a, b), out, vjp)


def add(a: Any, b: Any) -> Tensor:
    return _binary("add", a, b, np.add, lambda g, x, y, o: (g, g))


def sub(a: Any, b: Any) -> Tensor:
    return _binary("sub", a, b, np.subtract, lambda g, x, y, o: (g, -g))


def mul(a: Any, b: Any) -> Tensor:
    return _binary("mul", a, b, np.multiply, lambda g, x, y, o: (g * y, g * x))


def div(a: Any, b: Any) -> Tensor:
    return _binary("div", a, b, np.divide, lambda g, x, y, o: (g / y, -g * o / y))


def _unary(kind: str, a: Any, forward, grad) -> Tensor:
    a = as_tensor(a)
    with np.errstate(all="ignore"):
        out = forward(a.values)

    def vjp(g: np.ndarray):
        return (grad(g, a.values, out),)

    return primitive(kind, (a,), out, vjp)


def neg(a: Any) -> Tensor:
    return _unary("neg", a, np.negative, lambda g, x, o: -g)


def exp(a: Any) -> Tensor:
    return _unary("exp", a, np.exp, lambda g, x, o: g * o)


def log(a: Any) -> Tensor:
    return _unary("log", a, np.log, lambda g, x, o: g / x)


def tanh(a: Any) -> Tensor:
    return _unary("tanh", a, np.tanh, lambda g, x, o: g * (1.0 - o * o))


def sigmoid(a: Any) -> Tensor:
    return _unary(
        "sigmoid",
        a,
        lambda x: np.exp(-np.logaddexp(0.0, -x)),
        lambda g, x, o: g * o * (1.0 - o),
    )


def softplus(a: Any) -> Tensor:
    """log(1 + exp(a)), computed without overflow."""
    return _unary(
        "softplus",
        a,
        lambda x: np.logaddexp(0.0, x),
        lambda g, x, o: g * np.exp(-np.logaddexp(0.0, -x)),
    )


def leaky_relu(a: Any, slope: float = DEFAULT_SLOPE) -> Tensor:
    return _unary(
        "leaky_relu",
        a,
        lambda x: np.where(x > 0, x, slope * x),
        lambda g, x, o: g * np.where(x > 0, 1.0, slope),
    )


def square(a: Any) -> Tensor:
    return _unary("square", a, np.square, lambda g, x, o: 2.0 * g * x)


def clip(a: Any, low: float, high: float) -> Tensor:
    """Clamp values to [low, high]; the gradient is zero outside the interval."""
    return _unary(
        "clip",
        a,
        lambda x: np.clip(x, low, high),
        lambda g, x, o: g * ((x >= low) & (x <= high)),
    )


_BINARY = {"add": add, "sub": sub, "mul": mul, "div": div}
_UNARY = {
    "neg": neg,
    "exp": exp,
    "log": log,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "softplus": softplus,
    "square": square,
}


def elementwise(op: str, a: Any, b: Any = None, *, slope: float = DEFAULT_SLOPE) -> Tensor:
    """Apply an elementwise operation by name.

    Args:
        op: One of add, sub, mul, div, neg, exp, log, tanh, sigmoid, softplus, square,
            leaky_relu.
        a: First operand.
        b: Second operand for binary ops.
        slope: Negative-side slope for leaky_relu.

    Returns:
        Result tensor.
    """
    if op in _BINARY:
        if b is None:
            raise ShapeError(f"{op} needs two operands")
        return _BINARY[op](a, b)
    if b is not None:
        raise ShapeError(f"{op} takes a single operand")
    if op == "leaky_relu":
        return leaky_relu(a, slope)
    if op in _UNARY:
        return _UNARY[op](a)
    raise ValueError(f"Unknown elementwise op: {op}")


# ============================================================================
# Linear algebra, reductions and shape operations
# ============================================================================


def matmul(a: Any, b: Any) -> Tensor:
    """Matrix product of two 2-D tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    out = a.values @ b.values

    def vjp(g: np.ndarray):
        return (
            g @ b.values.T if a.is_recorded else None,
            a.values.T @ g if b.is_recorded else None,
        )

    return primitive("matmul", (a, b), out, vjp)


def _normalize_axes(axis: Axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    normalized = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise ShapeError(f"Axis {ax} is invalid for a {ndim}-D tensor")
        normalized.append(ax % ndim)
    if len(set(normalized)) != len(normalized):
        raise ShapeError(f"Repeated axes in {axes}")
    return tuple(sorted(normalized))


def _reduce(kind: str, a: Any, axis: Axis, keepdims: bool, scale_by_count: bool) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    out = a.values.sum(axis=axes, keepdims=keepdims)
    if scale_by_count:
        if count == 0:
            raise ShapeError(f"{kind} over an empty axis")
        out = out / count

    def vjp(g: np.ndarray):
        if not keepdims:
            g = np.expand_dims(g, axes)
        grad = np.broadcast_to(g, a.shape).copy()
        return (grad / count if scale_by_count else grad,)

    return primitive(kind, (a,), out, vjp)


def reduce_sum(a: Any, axis: Axis = None, keepdims: bool = False) -> Tensor:
    return _reduce("sum", a, axis, keepdims, scale_by_count=False)


def reduce_mean(a: Any, axis: Axis = None, keepdims: bool = False) -> Tensor:
    return _reduce("mean", a, axis, keepdims, scale_by_count=True)


def reduce(op: str, a: Any, axis: Axis = None, keepdims: bool = False) -> Tensor:
    """Sum or mean over the given axes (all axes when ``axis`` is None)."""
    if op == "sum":
        return reduce_sum(a, axis, keepdims)
    if op == "mean":
        return reduce_mean(a, axis, keepdims)
    raise ValueError(f"Unknown reduction: {op}")


def reshape(a: Any, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    shape = tuple(int(s) for s in shape)
    if -1 not in shape and int(np.prod(shape)) != a.size:
        raise ShapeError(f"Cannot reshape {a.shape} ({a.size} elements) to {shape}")
    try:
        out = a.values.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"Cannot reshape {a.shape} to {shape}") from e
    return primitive("reshape", (a,), out, lambda g: (g.reshape(a.shape),))


def slice_axis(a: Any, start: int, stop: int, axis: int = -1) -> Tensor:
    """Take the half-open range [start, stop) along one axis."""
    a = as_tensor(a)
    (ax,) = _normalize_axes(axis, a.ndim)
    if not 0 <= start <= stop <= a.shape[ax]:
        raise ShapeError(f"Slice [{start}:{stop}] out of range for axis of size {a.shape[ax]}")
    index = [slice(None)] * a.ndim
    index[ax] = slice(start, stop)
    index = tuple(index)

    def vjp(g: np.ndarray):
        grad = np.zeros_like(a.values)
        grad[index] = g
        return (grad,)

    return primitive("slice", (a,), a.values[index], vjp)


def concat(tensors: Sequence[Any], axis: int = -1) -> Tensor:
    """Join tensors along an existing axis."""
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    (ax,) = _normalize_axes(axis, tensors[0].ndim)
    try:
        out = np.concatenate([t.values for t in tensors], axis=ax)
    except ValueError as e:
        raise ShapeError(f"Cannot concatenate shapes {[t.shape for t in tensors]}") from e
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def vjp(g: np.ndarray):
        return tuple(np.split(g, bounds, axis=ax))

    return primitive("concat", tensors, out, vjp)


def take(a: Any, indices: Sequence[int] | np.ndarray, axis: int = -1) -> Tensor:
    """Gather entries along an axis by integer index."""
    a = as_tensor(a)
    (ax,) = _normalize_axes(axis, a.ndim)
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= a.shape[ax]):
        raise ShapeError(f"take indices out of range for axis of size {a.shape[ax]}")
    out = np.take(a.values, indices, axis=ax)

    def vjp(g: np.ndarray):
        grad = np.zeros_like(a.values)
        moved = np.moveaxis(grad, ax, 0)
        np.add.at(moved, indices, np.moveaxis(g, ax, 0))
        return (grad,)

    return primitive("take", (a,), out, vjp)


def log_softmax(a: Any, axis: int = -1) -> Tensor:
    """Log of the softmax along an axis, via the max-shift."""
    a = as_tensor(a)
    (ax,) = _normalize_axes(axis, a.ndim)
    shifted = a.values - a.values.max(axis=ax, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=ax, keepdims=True))

    def vjp(g: np.ndarray):
        return (g - np.exp(out) * g.sum(axis=ax, keepdims=True),)

    return primitive("log_softmax", (a,), out, vjp)


def softmax(a: Any, axis: int = -1) -> Tensor:
    """Softmax along an axis, via the max-shift."""
    a = as_tensor(a)
    (ax,) = _normalize_axes(axis, a.ndim)
    shifted = np.exp(a.values - a.values.max(axis=ax, keepdims=True))
    out = shifted / shifted.sum(axis=ax, keepdims=True)

    def vjp(g: np.ndarray):
        return (out * (g - (g * out).sum(axis=ax, keepdims=True)),)

    return primitive("softmax", (a,), out, vjp)


def row_norms(values: np.ndarray) -> np.ndarray:
    """Per-sample L2 norms of a batch, flattening all non-batch axes."""
    values = np.asarray(values, dtype=np.float64)
    return np.sqrt(np.sum(values.reshape(values.shape[0], -1) ** 2, axis=1))
