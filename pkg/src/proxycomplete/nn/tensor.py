"""Dense tensors with reverse-mode automatic differentiation.

A Tensor wraps a float64 numpy buffer; every op records a backward closure
so gradients of any scalar reachable from ``requires_grad`` leaves can be
recovered with ``backward()``.  The op set is deliberately small: exactly
what the completion network and its losses need.
"""
from __future__ import annotations

from contextlib import contextmanager

import numpy as np

DTYPE = np.float64

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = bool(requires_grad) and _GRAD_ENABLED
        self.grad: np.ndarray | None = None
        self._backward = None
        self._parents: tuple[Tensor, ...] = ()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=DTYPE)  # copy: never alias a shared buffer
        else:
            self.grad += grad

    def backward(self, grad=None) -> None:
        """Reverse-mode sweep from this tensor.

        ``grad`` defaults to ones (the tensor must be scalar in that case).
        Leaf gradients accumulate across calls until ``zero_grad``.
        """
        if grad is None:
            if self.size != 1:
                raise ValueError("backward() without an explicit gradient requires a scalar")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=DTYPE)
            if grad.shape != self.shape:
                raise ValueError(f"gradient shape {grad.shape} does not match tensor shape {self.shape}")

        # Iterative topological order (graphs are deep enough to overflow
        # Python's recursion limit during training).
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        self._accumulate(grad)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Operator sugar; the actual machinery lives in the module functions.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _ensure(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> Tensor:
    a, b = _ensure(a), _ensure(b)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _ensure(a), _ensure(b)
    data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _make(data, (a, b), backward)


def neg(a) -> Tensor:
    a = _ensure(a)

    def backward(g):
        if a.requires_grad:
            a._accumulate(-g)

    return _make(-a.data, (a,), backward)


def mul(a, b) -> Tensor:
    a, b = _ensure(a), _ensure(b)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _ensure(a), _ensure(b)
    data = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data**2), b.shape))

    return _make(data, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = _ensure(a), _ensure(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul requires >=2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    data = np.matmul(a.data, b.data)

    def backward(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            b._accumulate(_unbroadcast(gb, b.shape))

    return _make(data, (a, b), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_ensure(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(start, stop)
                t._accumulate(g[tuple(sl)])

    return _make(data, tuple(tensors), backward)


def reshape(a, shape) -> Tensor:
    a = _ensure(a)
    data = a.data.reshape(shape)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.shape))

    return _make(data, (a,), backward)


def transpose(a, axes) -> Tensor:
    a = _ensure(a)
    axes = tuple(axes)
    data = a.data.transpose(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.transpose(inverse))

    return _make(data, (a,), backward)


def _normalize_axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise ValueError(f"axis {axis} out of range for {ndim}-D tensor")
    return axis % ndim


def reduce_sum(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = _ensure(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if not a.requires_grad:
            return
        gg = g if (axis is None or keepdims) else np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(gg, a.shape))

    return _make(data, (a,), backward)


def reduce_mean(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = _ensure(a)
    data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.size if axis is None else a.shape[_normalize_axis(axis, a.ndim)]

    def backward(g):
        if not a.requires_grad:
            return
        gg = g if (axis is None or keepdims) else np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(gg, a.shape) / count)

    return _make(data, (a,), backward)


def _reduce_extreme(a, axis: int, keepdims: bool, largest: bool) -> Tensor:
    a = _ensure(a)
    axis = _normalize_axis(axis, a.ndim)
    if largest:
        data = a.data.max(axis=axis, keepdims=keepdims)
        arg = np.argmax(a.data, axis=axis)
    else:
        data = a.data.min(axis=axis, keepdims=keepdims)
        arg = np.argmin(a.data, axis=axis)

    def backward(g):
        if not a.requires_grad:
            return
        gg = g if keepdims else np.expand_dims(g, axis)
        full = np.zeros_like(a.data)
        np.put_along_axis(full, np.expand_dims(arg, axis), gg, axis=axis)
        a._accumulate(full)

    return _make(data, (a,), backward)


def reduce_max(a, axis: int, keepdims: bool = False) -> Tensor:
    """Max along one axis; ties route the gradient to the lowest index."""
    return _reduce_extreme(a, axis, keepdims, largest=True)


def reduce_min(a, axis: int, keepdims: bool = False) -> Tensor:
    return _reduce_extreme(a, axis, keepdims, largest=False)


def relu(a) -> Tensor:
    a = _ensure(a)
    data = np.maximum(a.data, 0.0)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (a.data > 0.0))

    return _make(data, (a,), backward)


def absolute(a) -> Tensor:
    a = _ensure(a)
    data = np.abs(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * np.sign(a.data))

    return _make(data, (a,), backward)


def exp(a) -> Tensor:
    a = _ensure(a)
    data = np.exp(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * data)

    return _make(data, (a,), backward)


def sqrt(a) -> Tensor:
    """Elementwise square root with a clamped backward.

    The derivative denominator is floored so structurally-zero inputs whose
    upstream gradient also vanishes cannot poison the sweep with NaNs.
    """
    a = _ensure(a)
    data = np.sqrt(a.data)

    def backward(g):
        if a.requires_grad:
            denom = np.sqrt(np.maximum(a.data, 1e-24))
            a._accumulate(g * 0.5 / denom)

    return _make(data, (a,), backward)


def gather(a, index) -> Tensor:
    """Index rows of ``a`` along axis 0 with an integer array.

    Output shape is ``index.shape + a.shape[1:]``; the backward pass
    scatter-adds into the source rows.
    """
    a = _ensure(a)
    index = np.asarray(index)
    if not np.issubdtype(index.dtype, np.integer):
        raise ValueError(f"gather index must be an integer array, got dtype {index.dtype}")
    if index.size and (index.min() < 0 or index.max() >= a.shape[0]):
        raise ValueError(f"gather index out of range for axis of length {a.shape[0]}")
    data = a.data[index]

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, index, g)
            a._accumulate(full)

    return _make(data, (a,), backward)


def softmax(a, axis: int = -1) -> Tensor:
    """Numerically stabilized softmax along ``axis``."""
    a = _ensure(a)
    axis = _normalize_axis(axis, a.ndim)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if a.requires_grad:
            dot = np.sum(g * data, axis=axis, keepdims=True)
            a._accumulate(data * (g - dot))

    return _make(data, (a,), backward)


def layer_norm(a, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean, unit population variance, then
    apply the affine gain/bias."""
    a = _ensure(a)
    mu = reduce_mean(a, axis=-1, keepdims=True)
    centered = sub(a, mu)
    var = reduce_mean(mul(centered, centered), axis=-1, keepdims=True)
    normalized = div(centered, sqrt(add(var, eps)))
    return add(mul(normalized, gain), bias)
