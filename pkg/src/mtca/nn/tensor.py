"""A small reverse-mode differentiation tape over numpy arrays.

Operations are coarse grained (a whole GRU layer is one node) so that the
Python overhead stays proportional to the number of layers, not to the
number of scalar operations.  All training math runs in float64.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 _parents: tuple["Tensor", ...] = (), _backward: Callable | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents = _parents
        # maps the output gradient to one gradient per parent (None where not needed)
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("only scalar multiplication is supported")
        return scale(self, float(other))

    __rmul__ = __mul__


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def _result(data, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=needs, _parents=tuple(parents) if needs else (),
                  _backward=backward if needs else None)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch in add: {a.shape} vs {b.shape}")
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of equally shaped tensors."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch in mul: {a.shape} vs {b.shape}")
    return _result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, k: float) -> Tensor:
    return _result(a.data * k, (a,), lambda g: (g * k,))


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = a.shape
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def take(a: Tensor, indices, axis: int = 1) -> Tensor:
    """Select entries along ``axis``; a scalar index drops the axis."""
    idx = np.asarray(indices)
    out = np.take(a.data, idx, axis=axis)

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(np.moveaxis(full, axis, 0), idx, np.moveaxis(g, axis, 0) if idx.ndim else g)
        return (full,)

    return _result(out, (a,), backward)


def weighted_sum(terms: Sequence[tuple[float, Tensor]]) -> Tensor:
    """Scalar combination ``sum(w * t)`` of scalar tensors, in the given order."""
    if not terms:
        raise ValueError("weighted_sum needs at least one term")
    total = 0.0
    for w, t in terms:
        if t.data.ndim != 0:
            raise ValueError("weighted_sum expects scalar tensors")
        total = total + w * t.data
    weights = [w for w, _ in terms]
    return _result(np.asarray(total), [t for _, t in terms], lambda g: tuple(g * w for w in weights))


def _topological_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, params: Sequence[Tensor] = ()) -> dict[int, np.ndarray]:
    """Reverse-mode sweep from a scalar ``loss``.

    Leaf gradients are written to ``.grad`` (overwriting, never accumulating
    across calls) and also returned keyed by ``id(tensor)``.  Entries of
    ``params`` that the loss does not depend on get zero gradients.
    """
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise ValueError(f"backward needs a scalar root, got shape {loss.shape}")
    zero_grad(params)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for node in reversed(_topological_order(loss)):
        g = grads.pop(id(node), None)
        if node._backward is None:
            if node.requires_grad:
                leaves[id(node)] = node
                node.grad = g if g is not None else np.zeros_like(node.data)
            continue
        if g is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
    out = {id(p): p.grad for p in params}
    out.update((k, t.grad) for k, t in leaves.items())
    return out


def zero_grad(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = np.zeros_like(p.data)


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    inverse = tuple(np.argsort(axes))
    return _result(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))
