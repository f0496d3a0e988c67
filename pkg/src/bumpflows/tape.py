"""Reverse-mode differentiation on NumPy arrays.

Every operation appends a :class:`Node` whose parent links carry
vector-Jacobian-product closures. The closures are themselves written in
terms of the primitives below, so a reverse pass produces a new
differentiable graph and ``grad`` can be nested for second-order
derivatives (reverse-over-reverse).

Shapes are restricted to scalars, vectors and (batch x features)
matrices. Broadcasting between those shapes is supported; the implied
reductions in the backward pass are made explicit via ``_unbroadcast``.

Accumulation order during a reverse sweep is fixed by node creation
order, so gradients are bit-identical across runs on identical inputs.
"""

from __future__ import annotations

import heapq
import itertools

import numpy as np

_ids = itertools.count()


class Node:
    """One value in the computation graph."""

    __slots__ = ("value", "parents", "tid")

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.tid = next(_ids)

    @property
    def shape(self):
        return self.value.shape

    # arithmetic sugar -------------------------------------------------
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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return pow_const(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Node(shape={self.value.shape}, tid={self.tid})"


def as_node(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


def constant(x) -> Node:
    return Node(x)


def detach(a: Node) -> Node:
    """Copy of ``a`` with no graph history (stop-gradient)."""
    return Node(a.value)


# ----------------------------------------------------------------------
# broadcasting helpers
# ----------------------------------------------------------------------

def _unbroadcast(g: Node, shape: tuple) -> Node:
    """Reduce a broadcast cotangent back to ``shape``."""
    if g.value.shape == shape:
        return g
    extra = g.value.ndim - len(shape)
    if extra > 0:
        g = sum_(g, axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.value.shape[i] != 1)
    if axes:
        g = sum_(g, axis=axes, keepdims=True)
    if g.value.shape != shape:
        g = reshape(g, shape)
    return g


# ----------------------------------------------------------------------
# primitives
# ----------------------------------------------------------------------

def add(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return Node(a.value + b.value, (
        (a, lambda g: _unbroadcast(g, a.value.shape)),
        (b, lambda g: _unbroadcast(g, b.value.shape)),
    ))


def sub(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return Node(a.value - b.value, (
        (a, lambda g: _unbroadcast(g, a.value.shape)),
        (b, lambda g: _unbroadcast(neg(g), b.value.shape)),
    ))


def neg(a) -> Node:
    a = as_node(a)
    return Node(-a.value, ((a, lambda g: neg(g)),))


def mul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return Node(a.value * b.value, (
        (a, lambda g: _unbroadcast(mul(g, b), a.value.shape)),
        (b, lambda g: _unbroadcast(mul(g, a), b.value.shape)),
    ))


def div(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return Node(a.value / b.value, (
        (a, lambda g: _unbroadcast(div(g, b), a.value.shape)),
        (b, lambda g: _unbroadcast(neg(div(mul(g, a), mul(b, b))), b.value.shape)),
    ))


def pow_const(a, p: float) -> Node:
    """``a ** p`` for a constant exponent; ``a`` must stay positive when p is non-integral."""
    a = as_node(a)
    out = Node(a.value ** p)
    out.parents = ((a, lambda g: mul(g, mul(constant(p), pow_const(a, p - 1)))),)
    return out


def exp(a) -> Node:
    a = as_node(a)
    out = Node(np.exp(a.value))
    out.parents = ((a, lambda g: mul(g, out)),)
    return out


def log(a) -> Node:
    a = as_node(a)
    return Node(np.log(a.value), ((a, lambda g: div(g, a)),))


def log1p(a) -> Node:
    a = as_node(a)
    return Node(np.log1p(a.value), ((a, lambda g: div(g, add(a, 1.0))),))


def sqrt(a) -> Node:
    a = as_node(a)
    out = Node(np.sqrt(a.value))
    out.parents = ((a, lambda g: div(g, mul(constant(2.0), out))),)
    return out


def sin(a) -> Node:
    a = as_node(a)
    return Node(np.sin(a.value), ((a, lambda g: mul(g, cos(a))),))


def cos(a) -> Node:
    a = as_node(a)
    return Node(np.cos(a.value), ((a, lambda g: neg(mul(g, sin(a)))),))


def tanh(a) -> Node:
    a = as_node(a)
    out = Node(np.tanh(a.value))
    out.parents = ((a, lambda g: mul(g, sub(1.0, mul(out, out)))),)
    return out


def sigmoid(a) -> Node:
    a = as_node(a)
    v = a.value
    e = np.exp(-np.abs(v))
    out = Node(np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e)))
    out.parents = ((a, lambda g: mul(g, mul(out, sub(1.0, out)))),)
    return out


def reciprocal(a) -> Node:
    a = as_node(a)
    out = Node(1.0 / a.value)
    out.parents = ((a, lambda g: neg(mul(g, mul(out, out)))),)
    return out


def softplus(a) -> Node:
    a = as_node(a)
    return Node(np.logaddexp(0.0, a.value), ((a, lambda g: mul(g, sigmoid(a))),))


def mod1(a) -> Node:
    """Fractional part; derivative 1 away from integer crossings."""
    a = as_node(a)
    return Node(a.value - np.floor(a.value), ((a, lambda g: g),))


def where(cond, a, b) -> Node:
    """Select by a constant boolean mask (the mask carries no gradient)."""
    a, b = as_node(a), as_node(b)
    cond = np.asarray(cond, dtype=bool)
    return Node(np.where(cond, a.value, b.value), (
        (a, lambda g: _unbroadcast(where(cond, g, 0.0), a.value.shape)),
        (b, lambda g: _unbroadcast(where(cond, 0.0, g), b.value.shape)),
    ))


def matmul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return Node(a.value @ b.value, (
        (a, lambda g: matmul(g, transpose(b))),
        (b, lambda g: matmul(transpose(a), g)),
    ))


def transpose(a) -> Node:
    a = as_node(a)
    return Node(a.value.T, ((a, lambda g: transpose(g)),))


def sum_(a, axis=None, keepdims=False) -> Node:
    a = as_node(a)
    out = Node(np.sum(a.value, axis=axis, keepdims=keepdims))

    def vjp(g):
        if axis is None:
            return broadcast_to(g, a.value.shape)
        gg = g
        if not keepdims:
            shp = list(a.value.shape)
            for ax in (axis if isinstance(axis, tuple) else (axis,)):
                shp[ax] = 1
            gg = reshape(gg, tuple(shp))
        return broadcast_to(gg, a.value.shape)

    out.parents = ((a, vjp),)
    return out


def mean(a, axis=None) -> Node:
    a = as_node(a)
    n = a.value.size if axis is None else a.value.shape[axis]
    return div(sum_(a, axis=axis), float(n))


def broadcast_to(a, shape) -> Node:
    a = as_node(a)
    return Node(np.broadcast_to(a.value, shape).copy(),
                ((a, lambda g: _unbroadcast(g, a.value.shape)),))


def reshape(a, shape) -> Node:
    a = as_node(a)
    return Node(a.value.reshape(shape), ((a, lambda g: reshape(g, a.value.shape)),))


def concat(nodes, axis=1) -> Node:
    nodes = [as_node(n) for n in nodes]
    out = Node(np.concatenate([n.value for n in nodes], axis=axis))
    parents = []
    start = 0
    for n in nodes:
        width = n.value.shape[axis]
        sl = slice(start, start + width)
        parents.append((n, (lambda s: lambda g: take_cols(g, s) if axis == 1 else take_rows(g, s))(sl)))
        start += width
    out.parents = tuple(parents)
    return out


def take_cols(a, sl) -> Node:
    """Static column slice of a 2-d node."""
    a = as_node(a)
    return Node(a.value[:, sl], ((a, lambda g: scatter_cols(g, sl, a.value.shape)),))


def scatter_cols(g, sl, shape) -> Node:
    g = as_node(g)
    v = np.zeros(shape)
    v[:, sl] = g.value
    return Node(v, ((g, lambda h: take_cols(h, sl)),))


def take_rows(a, sl) -> Node:
    a = as_node(a)
    return Node(a.value[sl], ((a, lambda g: scatter_rows(g, sl, a.value.shape)),))


def scatter_rows(g, sl, shape) -> Node:
    g = as_node(g)
    v = np.zeros(shape)
    v[sl] = g.value
    return Node(v, ((g, lambda h: take_rows(h, sl)),))


def softmax(a, axis=1) -> Node:
    """Soft-max with a detached max shift (shift cancels in the exact gradient)."""
    a = as_node(a)
    shift = Node(np.max(a.value, axis=axis, keepdims=True))
    e = exp(sub(a, shift))
    return div(e, sum_(e, axis=axis, keepdims=True))


# ----------------------------------------------------------------------
# reverse sweep
# ----------------------------------------------------------------------

def _relevant(output: Node, wrt_ids: set) -> set:
    """Nodes on some path from ``output`` down to a requested leaf."""
    memo: dict[int, bool] = {}
    order: list[Node] = []
    stack = [(output, False)]
    seen = set()
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node.tid in seen:
            continue
        seen.add(node.tid)
        stack.append((node, True))
        for parent, _ in node.parents:
            if parent.tid not in seen:
                stack.append((parent, False))
    for node in order:  # parents first
        memo[node.tid] = node.tid in wrt_ids or any(
            memo.get(p.tid, False) for p, _ in node.parents)
    return {tid for tid, ok in memo.items() if ok}


def grad(output: Node, wrt, cotangent: Node | None = None) -> list[Node]:
    """Cotangents of ``output`` with respect to each node in ``wrt``.

    The returned nodes are part of the graph, so they can be
    differentiated again. Unreachable entries come back as zeros. The
    sweep only visits nodes lying on a path between the output and a
    requested leaf.
    """
    single = isinstance(wrt, Node)
    wrt_list = [wrt] if single else list(wrt)
    if cotangent is None:
        cotangent = Node(np.ones_like(output.value))
    wrt_ids = {w.tid for w in wrt_list}
    live = _relevant(output, wrt_ids)
    found: dict[int, Node] = {}
    if output.tid in live:
        cot: dict[int, Node] = {output.tid: cotangent}
        nodes: dict[int, Node] = {output.tid: output}
        heap = [-output.tid]
        while heap:
            tid = -heapq.heappop(heap)
            node = nodes.pop(tid)
            ct = cot.pop(tid)
            if tid in wrt_ids:
                found[tid] = ct
            for parent, vjp in node.parents:
                if parent.tid not in live:
                    continue
                contribution = vjp(ct)
                if parent.tid in cot:
                    cot[parent.tid] = add(cot[parent.tid], contribution)
                else:
                    cot[parent.tid] = contribution
                    nodes[parent.tid] = parent
                    heapq.heappush(heap, -parent.tid)
    out = [found.get(w.tid, Node(np.zeros_like(w.value))) for w in wrt_list]
    return out[0] if single else out
