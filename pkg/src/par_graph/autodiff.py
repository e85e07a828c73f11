"""Minimal reverse-mode autodiff over float64 numpy matrices.

Every op returns a new `Tensor` holding its parents and a backward closure;
`Tensor.backward()` replays the tape in reverse topological order.
"""

from __future__ import annotations

import logging
from typing import Any, Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidArgumentError

logger = logging.getLogger(__name__)

Array = np.ndarray


class Tensor:
    def __init__(self, data: Any, requires_grad: bool = False, name: Optional[str] = None):
        self.data: Array = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[Array] = None
        self.name = name
        self.warnings: Tuple[str, ...] = ()
        self._backward: Callable[[], None] = lambda: None
        self._parents: Tuple[Tensor, ...] = ()

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        label = f", name={self.name}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{label})"

    def _accumulate(self, g: Array) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad = self.grad + g

    def _child(self, data: Array, parents: Sequence["Tensor"]) -> "Tensor":
        out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
        out._parents = tuple(parents)
        return out

    def backward(self, grad: Optional[Array] = None) -> None:
        topo: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        if grad is None:
            if self.data.size != 1:
                raise InvalidArgumentError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        self._accumulate(np.asarray(grad, dtype=np.float64))
        for node in reversed(topo):
            if node.requires_grad and node.grad is not None:
                node._backward()

    @staticmethod
    def _unbroadcast(g: Array, shape: Tuple[int, ...]) -> Array:
        if g.shape == shape:
            return g
        while g.ndim > len(shape):
            g = g.sum(axis=0)
        for axis, size in enumerate(shape):
            if size == 1 and g.shape[axis] != 1:
                g = g.sum(axis=axis, keepdims=True)
        return g

    def __add__(self, other: Any) -> "Tensor":
        other = as_tensor(other)
        out = self._child(self.data + other.data, (self, other))

        def _bw() -> None:
            if self.requires_grad:
                self._accumulate(Tensor._unbroadcast(out.grad, self.shape))
            if other.requires_grad:
                other._accumulate(Tensor._unbroadcast(out.grad, other.shape))

        out._backward = _bw
        return out

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        out = self._child(-self.data, (self,))

        def _bw() -> None:
            self._accumulate(-out.grad)

        out._backward = _bw
        return out

    def __sub__(self, other: Any) -> "Tensor":
        return self + (-as_tensor(other))

    def __rsub__(self, other: Any) -> "Tensor":
        return as_tensor(other) + (-self)

    def __mul__(self, other: Any) -> "Tensor":
        other = as_tensor(other)
        out = self._child(self.data * other.data, (self, other))

        def _bw() -> None:
            if self.requires_grad:
                self._accumulate(Tensor._unbroadcast(out.grad * other.data, self.shape))
            if other.requires_grad:
                other._accumulate(Tensor._unbroadcast(out.grad * self.data, other.shape))

        out._backward = _bw
        return out

    __rmul__ = __mul__

    def __truediv__(self, other: Any) -> "Tensor":
        other = as_tensor(other)
        out = self._child(self.data / other.data, (self, other))

        def _bw() -> None:
            if self.requires_grad:
                self._accumulate(Tensor._unbroadcast(out.grad / other.data, self.shape))
            if other.requires_grad:
                other._accumulate(
                    Tensor._unbroadcast(-out.grad * self.data / (other.data ** 2), other.shape)
                )

        out._backward = _bw
        return out

    def __matmul__(self, other: Any) -> "Tensor":
        other = as_tensor(other)
        if self.data.shape[-1] != other.data.shape[0]:
            raise InvalidArgumentError(
                f"matmul shape mismatch: {self.data.shape} @ {other.data.shape}"
            )
        out = self._child(self.data @ other.data, (self, other))

        def _bw() -> None:
            if self.requires_grad:
                self._accumulate(out.grad @ other.data.T)
            if other.requires_grad:
                other._accumulate(self.data.T @ out.grad)

        out._backward = _bw
        return out

    @property
    def T(self) -> "Tensor":
        out = self._child(self.data.T, (self,))

        def _bw() -> None:
            self._accumulate(out.grad.T)

        out._backward = _bw
        return out

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        out = self._child(self.data.sum(axis=axis, keepdims=keepdims), (self,))

        def _bw() -> None:
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis=axis)
            self._accumulate(np.broadcast_to(g, self.data.shape).copy())

        out._backward = _bw
        return out

    def relu(self) -> "Tensor":
        mask = self.data > 0.0
        out = self._child(np.where(mask, self.data, 0.0), (self,))

        def _bw() -> None:
            self._accumulate(out.grad * mask)

        out._backward = _bw
        return out

    def sigmoid(self) -> "Tensor":
        s = sigmoid(self.data)
        out = self._child(s, (self,))

        def _bw() -> None:
            self._accumulate(out.grad * s * (1.0 - s))

        out._backward = _bw
        return out

    def max_rows(self) -> "Tensor":
        """Elementwise max over rows (1 x cols); ties route the gradient to the first row."""
        idx = np.argmax(self.data, axis=0)
        cols = np.arange(self.data.shape[1])
        out = self._child(self.data[idx, cols][None, :], (self,))

        def _bw() -> None:
            g = np.zeros_like(self.data)
            g[idx, cols] = out.grad[0]
            self._accumulate(g)

        out._backward = _bw
        return out

    def take_rows(self, indices: Sequence[int]) -> "Tensor":
        index = np.asarray(list(indices), dtype=np.int64)
        out = self._child(self.data[index], (self,))

        def _bw() -> None:
            g = np.zeros_like(self.data)
            np.add.at(g, index, out.grad)
            self._accumulate(g)

        out._backward = _bw
        return out


def as_tensor(value: Any) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def sigmoid(x: Array) -> Array:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax_rows(m: Array) -> Array:
    """Row softmax on a raw array; -inf entries are masked to exactly 0."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise InvalidArgumentError("row_softmax needs a non-empty matrix")
    if np.isnan(m).any() or np.isposinf(m).any():
        raise InvalidArgumentError("row_softmax input must be finite or -inf")
    masked = np.isneginf(m)
    full_rows = masked.all(axis=1)
    if full_rows.any():
        logger.warning("row_softmax: %d fully masked rows", int(full_rows.sum()))
    safe = np.where(masked, 0.0, m)
    row_max = np.where(masked, -np.inf, safe).max(axis=1, keepdims=True)
    row_max = np.where(np.isfinite(row_max), row_max, 0.0)
    e = np.where(masked, 0.0, np.exp(safe - row_max))
    total = e.sum(axis=1, keepdims=True)
    return np.divide(e, total, out=np.zeros_like(e), where=total > 0)


def row_softmax(m: Tensor, additive_mask: Optional[Array] = None) -> Tensor:
    logits = m.data if additive_mask is None else m.data + additive_mask
    y = softmax_rows(logits)
    out = m._child(y, (m,))

    def _bw() -> None:
        g = out.grad
        m._accumulate(y * (g - (g * y).sum(axis=1, keepdims=True)))

    out._backward = _bw
    return out


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise InvalidArgumentError("concat needs at least one tensor")
    parts = [t.data for t in tensors]
    out = tensors[0]._child(np.concatenate(parts, axis=axis), tensors)
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def _bw() -> None:
        for t, g in zip(tensors, np.split(out.grad, bounds, axis=axis)):
            if t.requires_grad:
                t._accumulate(g)

    out._backward = _bw
    return out
