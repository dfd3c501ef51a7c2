"""A small tape-based reverse-mode differentiation engine over numpy arrays.

Each operation records its parents and a closure mapping the output
cotangent to parent cotangents. :func:`backward` walks the tape in reverse
topological order. Only the operations the attention network needs are
provided.
"""

from __future__ import annotations

import numpy as np


class Var:
    __slots__ = ("value", "parents", "vjp", "grad")

    def __init__(self, value, parents=(), vjp=None):
        self.value = np.asarray(value, dtype=float)
        self.parents = parents
        self.vjp = vjp
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def __repr__(self):
        return f"Var(shape={self.value.shape})"


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    return Var(a.value + b.value, (a, b),
               lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    return Var(a.value - b.value, (a, b),
               lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    return Var(a.value * b.value, (a, b),
               lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)))


def div(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = a.value / b.value
    return Var(out, (a, b),
               lambda g: (_unbroadcast(g / b.value, a.shape),
                          _unbroadcast(-g * out / b.value, b.shape)))


def matmul(a, b) -> Var:
    a, b = as_var(a), as_var(b)

    def vjp(g):
        av, bv = a.value, b.value
        if av.ndim == 1 and bv.ndim == 1:
            return g * bv, g * av
        if bv.ndim == 1:
            return np.outer(g, bv), av.T @ g
        if av.ndim == 1:
            return bv @ g, np.outer(av, g)
        return g @ bv.T, av.T @ g

    return Var(a.value @ b.value, (a, b), vjp)


def getitem(a, key) -> Var:
    def vjp(g):
        out = np.zeros_like(a.value)
        np.add.at(out, key, g)
        return (out,)

    return Var(a.value[key], (a,), vjp)


def take_rows(a, idx) -> Var:
    idx = np.asarray(idx, dtype=np.int64)
    return getitem(a, idx)


def segment_sum(a, seg, n: int) -> Var:
    """Sum rows of ``a`` into ``n`` buckets given by ``seg``."""
    a = as_var(a)
    seg = np.asarray(seg, dtype=np.int64)
    out = np.zeros((n,) + a.shape[1:])
    np.add.at(out, seg, a.value)
    return Var(out, (a,), lambda g: (g[seg],))


def total(a, axis=None, keepdims=False) -> Var:
    a = as_var(a)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return Var(a.value.sum(axis=axis, keepdims=keepdims), (a,), vjp)


def exp(a) -> Var:
    a = as_var(a)
    out = np.exp(a.value)
    return Var(out, (a,), lambda g: (g * out,))


def log(a) -> Var:
    a = as_var(a)
    return Var(np.log(a.value), (a,), lambda g: (g / a.value,))


def tanh(a) -> Var:
    a = as_var(a)
    out = np.tanh(a.value)
    return Var(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a) -> Var:
    a = as_var(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return Var(out, (a,), lambda g: (g * out * (1.0 - out),))


def leaky_relu(a, slope: float = 0.2) -> Var:
    a = as_var(a)
    scale = np.where(a.value > 0, 1.0, slope)
    return Var(a.value * scale, (a,), lambda g: (g * scale,))


def clamp_min(a, floor: float) -> Var:
    a = as_var(a)
    keep = a.value > floor
    return Var(np.where(keep, a.value, floor), (a,), lambda g: (g * keep,))


def backward(root: Var, seed=None):
    """Accumulate d root / d v into ``v.grad`` for every v on the tape."""
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    for node in order:
        node.grad = None
    root.grad = np.ones_like(root.value) if seed is None else np.asarray(seed, dtype=float)
    for node in reversed(order):
        if node.vjp is None or node.grad is None:
            continue
        for p, g in zip(node.parents, node.vjp(node.grad)):
            p.grad = g if p.grad is None else p.grad + g
