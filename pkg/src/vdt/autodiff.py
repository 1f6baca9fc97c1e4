"""Minimal reverse-mode automatic differentiation on dense float64 arrays.

Values are plain ``numpy.ndarray`` objects (float64, row-major). A :class:`Node`
wraps a value together with the closure that pushes its gradient back to its
parents. The tape is rebuilt on every forward pass.

Broadcasting is deliberately restricted: elementwise binary ops require equal
shapes, and the only broadcast is a bias row added to every row of a batch.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class DomainError(ValueError):
    """Input lies outside an op's mathematical domain."""


class ContractError(RuntimeError):
    """A caller-side precondition was violated."""


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Node:
    """One vertex of the computation graph."""

    __slots__ = ("value", "_grad", "parents", "_backward", "name")

    def __init__(
        self,
        value,
        parents: Sequence["Node"] = (),
        backward: Callable[[np.ndarray], None] | None = None,
        name: str | None = None,
    ):
        self.value = _as_array(value)
        self._grad = None  # materialised on first access or accumulation
        self.parents = tuple(parents)
        self._backward = backward
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.zeros_like(self.value)
        return self._grad

    @grad.setter
    def grad(self, g) -> None:
        self._grad = g

    def zero_grad(self) -> None:
        self._grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Node{label}(shape={self.shape})"

    # operator sugar; every operator maps onto one of the functions below
    def __add__(self, other):
        return add(self, _lift(other, self.shape))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _lift(other, self.shape))

    def __rsub__(self, other):
        return sub(_lift(other, self.shape), self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scalar_mul(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if not np.isscalar(other):
            raise TypeError("only division by a scalar is supported")
        return scalar_mul(self, 1.0 / float(other))

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def constant(value) -> Node:
    return Node(value)


def _lift(x, shape) -> Node:
    if isinstance(x, Node):
        return x
    if np.isscalar(x):
        return Node(np.full(shape, float(x)))
    return Node(x)


def _check_same(a: Node, b: Node, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def backward(root: Node) -> None:
    """Accumulate d(root)/d(node) into ``node.grad`` for every reachable node.

    Gradients add onto whatever is already stored, so calling this twice
    without :func:`zero_grad` doubles them.
    """
    if root.value.size != 1:
        raise ContractError(f"backward needs a scalar root, got shape {root.shape}")

    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
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

    # gradients still flowing into a node, keyed by identity
    pending: dict[int, np.ndarray] = {id(root): np.ones_like(root.value)}
    for node in reversed(order):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        node._grad = g if node._grad is None else node._grad + g
        if node._backward is not None:
            for parent, pg in zip(node.parents, node._backward(g)):
                if pg is None:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + pg
                else:
                    pending[key] = pg


def zero_grad(nodes) -> None:
    for n in nodes:
        n.zero_grad()


# ---------------------------------------------------------------- linear ops


def matmul(a: Node, b: Node) -> Node:
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ShapeError(f"matmul needs 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions {a.shape} x {b.shape}")
    av, bv = a.value, b.value

    def bw(g):
        return g @ bv.T, av.T @ g

    return Node(av @ bv, (a, b), bw)


def transpose(a: Node) -> Node:
    if a.value.ndim != 2:
        raise ShapeError("transpose needs a 2-d operand")
    return Node(a.value.T.copy(), (a,), lambda g: (g.T,))


def add(a: Node, b: Node) -> Node:
    _check_same(a, b, "add")
    return Node(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a: Node, b: Node) -> Node:
    _check_same(a, b, "sub")
    return Node(a.value - b.value, (a, b), lambda g: (g, -g))


def add_bias(x: Node, bias: Node) -> Node:
    """Add a bias row (shape ``(n,)`` or ``(1, n)``) to every row of ``x``."""
    if x.value.ndim != 2:
        raise ShapeError("add_bias needs a 2-d batch")
    if bias.value.size != x.shape[1] or bias.value.ndim > 2 or (
        bias.value.ndim == 2 and bias.shape[0] != 1
    ):
        raise ShapeError(f"add_bias: bias {bias.shape} does not fit batch {x.shape}")
    bshape = bias.shape

    def bw(g):
        return g, g.sum(axis=0).reshape(bshape)

    return Node(x.value + bias.value.reshape(1, -1), (x, bias), bw)


def mul(a: Node, b: Node) -> Node:
    _check_same(a, b, "mul")
    av, bv = a.value, b.value
    return Node(av * bv, (a, b), lambda g: (g * bv, g * av))


def scalar_mul(a: Node, c: float) -> Node:
    return Node(a.value * c, (a,), lambda g: (g * c,))


def concat_rows(a: Node, b: Node) -> Node:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"concat_rows: {a.shape} and {b.shape}")
    n = a.shape[0]
    return Node(np.vstack([a.value, b.value]), (a, b), lambda g: (g[:n], g[n:]))


def take_rows(a: Node, idx) -> Node:
    idx = np.asarray(idx, dtype=np.intp)
    shape = a.shape

    def bw(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return Node(a.value[idx], (a,), bw)


# ------------------------------------------------------- elementwise nonlinear


def sigmoid(x: Node) -> Node:
    v = x.value
    # split by sign so exp never overflows
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return Node(out, (x,), lambda g: (g * out * (1.0 - out),))


def relu(x: Node) -> Node:
    mask = x.value > 0
    return Node(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def exp(x: Node) -> Node:
    out = np.exp(x.value)
    return Node(out, (x,), lambda g: (g * out,))


def log(x: Node) -> Node:
    if np.any(x.value <= 0):
        raise DomainError("log of a non-positive value")
    v = x.value
    return Node(np.log(v), (x,), lambda g: (g / v,))


def square(x: Node) -> Node:
    v = x.value
    return Node(v * v, (x,), lambda g: (2.0 * g * v,))


def clip(x: Node, lo: float, hi: float) -> Node:
    """Clamp to ``[lo, hi]``; gradient is zero where clamping is active."""
    v = x.value
    inside = (v >= lo) & (v <= hi)
    return Node(np.clip(v, lo, hi), (x,), lambda g: (g * inside,))


# ------------------------------------------------------------------ reductions


def sum(x: Node) -> Node:  # noqa: A001 - mirrors numpy naming
    shape = x.shape
    return Node(x.value.sum(), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean(x: Node) -> Node:
    shape = x.shape
    n = x.value.size

    def bw(g):
        return (np.full(shape, float(g) / n),)

    return Node(x.value.mean(), (x,), bw)


def sum_rows(x: Node) -> Node:
    """Per-row sum of a 2-d node, giving shape ``(m,)``."""
    if x.value.ndim != 2:
        raise ShapeError("sum_rows needs a 2-d operand")
    shape = x.shape
    return Node(
        x.value.sum(axis=1), (x,), lambda g: (np.broadcast_to(g[:, None], shape).copy(),)
    )


# ------------------------------------------------------------- row-wise maps


def softmax_rowwise(x: Node) -> Node:
    v = x.value - x.value.max(axis=1, keepdims=True)
    e = np.exp(v)
    s = e / e.sum(axis=1, keepdims=True)

    def bw(g):
        return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

    return Node(s, (x,), bw)


def logsumexp_rowwise(x: Node, exclude=None) -> Node:
    """Row-wise ``log(sum(exp(x)))``, skipping entries where ``exclude`` is True."""
    v = x.value
    keep = np.ones(v.shape, dtype=bool) if exclude is None else ~np.asarray(exclude, bool)
    if not keep.any(axis=1).all():
        raise ContractError("logsumexp_rowwise: a row has no included entries")
    masked = np.where(keep, v, -np.inf)
    m = masked.max(axis=1, keepdims=True)
    e = np.where(keep, np.exp(masked - m), 0.0)
    tot = e.sum(axis=1, keepdims=True)
    out = (m + np.log(tot))[:, 0]
    w = e / tot

    def bw(g):
        return (w * g[:, None],)

    return Node(out, (x,), bw)


def l2_normalize_rowwise(x: Node, eps: float = 1e-12) -> Node:
    v = x.value
    norm = np.sqrt((v * v).sum(axis=1, keepdims=True))
    norm = np.maximum(norm, eps)
    u = v / norm

    def bw(g):
        return ((g - u * (g * u).sum(axis=1, keepdims=True)) / norm,)

    return Node(u, (x,), bw)
