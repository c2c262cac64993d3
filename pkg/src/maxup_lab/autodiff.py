"""Reverse-mode automatic differentiation on float64 numpy arrays.

A :class:`Tape` records primitive operations eagerly; :func:`backward` runs
one reverse sweep from a scalar output and returns exact gradients for any
subset of leaves.  Gradients can be taken with respect to model parameters
and with respect to inputs on the same tape.

Supported primitives: add, sub, mul (elementwise, scalar broadcast allowed),
matmul (ndim <= 2), relu, tanh, exp, log, neg, scale (by a python constant),
sum, max_reduce and logsumexp (full reductions to a scalar).

Conventions: relu'(0) = 0; max_reduce breaks ties toward the lowest flat
index.  Tapes are per-evaluation and thrown away after the sweep; there is no
higher-order differentiation.
"""

from __future__ import annotations

import numpy as np


class ShapeMismatch(ValueError):
    """Operand shapes do not conform to the primitive's rule."""


class NotScalarOutput(ValueError):
    """backward() was asked to start from a non-scalar node."""


class Variable:
    """A value on a tape.  Leaves are created via Tape.leaf()."""

    __slots__ = ("tape", "index", "value")

    def __init__(self, tape: "Tape", index: int, value: np.ndarray):
        self.tape = tape
        self.index = index
        self.value = value

    @property
    def shape(self):
        return self.value.shape


class _Node:
    __slots__ = ("op", "parents", "vjps")

    def __init__(self, op, parents, vjps):
        self.op = op
        self.parents = parents  # indices of input nodes
        self.vjps = vjps        # one callable per parent: adjoint -> contribution


class Tape:
    """Append-only record of primitive operations, in topological order."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self._values: list[np.ndarray] = []

    def __len__(self):
        return len(self.nodes)

    def _push(self, op, parents, vjps, value) -> Variable:
        self.nodes.append(_Node(op, parents, vjps))
        self._values.append(value)
        return Variable(self, len(self.nodes) - 1, value)

    def leaf(self, value) -> Variable:
        value = np.asarray(value, dtype=np.float64)
        return self._push("leaf", (), (), value)

    def constant(self, value) -> Variable:
        # same as a leaf; named for intent at call sites
        return self.leaf(value)


def _check_same_tape(*vs: Variable) -> Tape:
    tape = vs[0].tape
    for v in vs[1:]:
        if v.tape is not tape:
            raise ValueError("variables belong to different tapes")
    return tape


def _elementwise_shapes(a: Variable, b: Variable, op: str):
    try:
        np.broadcast_shapes(a.value.shape, b.value.shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: shapes {a.value.shape} and {b.value.shape}") from None


def _reduce_to(grad: np.ndarray, shape) -> np.ndarray:
    # undo broadcasting: sum the adjoint down to the operand's shape
    shape = tuple(shape)
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, extent in enumerate(shape):
        if extent == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad.reshape(shape)


def add(a: Variable, b: Variable) -> Variable:
    tape = _check_same_tape(a, b)
    _elementwise_shapes(a, b, "add")
    value = a.value + b.value
    sa, sb = a.value.shape, b.value.shape
    return tape._push("add", (a.index, b.index),
                      (lambda g: _reduce_to(g, sa), lambda g: _reduce_to(g, sb)),
                      value)


def sub(a: Variable, b: Variable) -> Variable:
    tape = _check_same_tape(a, b)
    _elementwise_shapes(a, b, "sub")
    value = a.value - b.value
    sa, sb = a.value.shape, b.value.shape
    return tape._push("sub", (a.index, b.index),
                      (lambda g: _reduce_to(g, sa), lambda g: _reduce_to(-g, sb)),
                      value)


def mul(a: Variable, b: Variable) -> Variable:
    tape = _check_same_tape(a, b)
    _elementwise_shapes(a, b, "mul")
    value = a.value * b.value
    av, bv = a.value, b.value
    return tape._push("mul", (a.index, b.index),
                      (lambda g: _reduce_to(g * bv, av.shape),
                       lambda g: _reduce_to(g * av, bv.shape)),
                      value)


def matmul(a: Variable, b: Variable) -> Variable:
    tape = _check_same_tape(a, b)
    av, bv = a.value, b.value
    if av.ndim > 2 or bv.ndim > 2 or av.ndim == 0 or bv.ndim == 0:
        raise ShapeMismatch(f"matmul: ndim must be 1 or 2, got {av.ndim} and {bv.ndim}")
    if av.shape[-1] != (bv.shape[0] if bv.ndim >= 1 else None):
        raise ShapeMismatch(f"matmul: inner dims {av.shape} @ {bv.shape}")
    value = av @ bv

    def vjp_a(g):
        if av.ndim == 1 and bv.ndim == 1:        # (k,)@(k,) -> ()
            return g * bv
        if av.ndim == 2 and bv.ndim == 1:        # (n,k)@(k,) -> (n,)
            return np.outer(g, bv)
        if av.ndim == 1 and bv.ndim == 2:        # (k,)@(k,m) -> (m,)
            return bv @ g
        return g @ bv.T                          # (n,k)@(k,m) -> (n,m)

    def vjp_b(g):
        if av.ndim == 1 and bv.ndim == 1:
            return g * av
        if av.ndim == 2 and bv.ndim == 1:
            return av.T @ g
        if av.ndim == 1 and bv.ndim == 2:
            return np.outer(av, g)
        return av.T @ g

    return tape._push("matmul", (a.index, b.index), (vjp_a, vjp_b), value)


def relu(a: Variable) -> Variable:
    value = np.maximum(a.value, 0.0)
    mask = (a.value > 0.0).astype(np.float64)
    return a.tape._push("relu", (a.index,), (lambda g: g * mask,), value)


def tanh(a: Variable) -> Variable:
    value = np.tanh(a.value)
    return a.tape._push("tanh", (a.index,), (lambda g: g * (1.0 - value * value),), value)


def exp(a: Variable) -> Variable:
    value = np.exp(a.value)
    return a.tape._push("exp", (a.index,), (lambda g: g * value,), value)


def log(a: Variable) -> Variable:
    value = np.log(a.value)
    av = a.value
    return a.tape._push("log", (a.index,), (lambda g: g / av,), value)


def neg(a: Variable) -> Variable:
    return a.tape._push("neg", (a.index,), (lambda g: -g,), -a.value)


def scale(a: Variable, c: float) -> Variable:
    c = float(c)
    return a.tape._push("scale", (a.index,), (lambda g: g * c,), a.value * c)


def tsum(a: Variable) -> Variable:
    """Sum of all elements, as a scalar-shaped variable."""
    value = np.asarray(np.sum(a.value))
    shape = a.value.shape
    return a.tape._push("sum", (a.index,), (lambda g: np.broadcast_to(g, shape).copy(),), value)


def max_reduce(a: Variable) -> Variable:
    """Max over all elements; subgradient routes to the lowest argmax index."""
    flat = a.value.reshape(-1)
    idx = int(np.argmax(flat))  # argmax returns the first (lowest) maximizer
    value = np.asarray(flat[idx])
    shape = a.value.shape

    def vjp(g):
        out = np.zeros(shape)
        out.reshape(-1)[idx] = float(g)
        return out

    return a.tape._push("max_reduce", (a.index,), (vjp,), value)


def logsumexp(a: Variable) -> Variable:
    """log(sum(exp(x))) over all elements, stabilized by the max."""
    flat = a.value.reshape(-1)
    hi = float(np.max(flat))
    ex = np.exp(flat - hi)
    total = float(np.sum(ex))
    value = np.asarray(hi + np.log(total))
    soft = (ex / total).reshape(a.value.shape)
    return a.tape._push("logsumexp", (a.index,), (lambda g: g * soft,), value)


PRIMITIVES = ("add", "sub", "mul", "matmul", "relu", "tanh", "exp", "log",
              "sum", "max_reduce", "logsumexp", "neg", "scale")


def record(primitive: str, *inputs) -> Variable:
    """Dispatch a primitive by name; ``scale`` takes (variable, constant)."""
    table = {"add": add, "sub": sub, "mul": mul, "matmul": matmul,
             "relu": relu, "tanh": tanh, "exp": exp, "log": log,
             "sum": tsum, "max_reduce": max_reduce, "logsumexp": logsumexp,
             "neg": neg, "scale": scale}
    if primitive not in table:
        raise ValueError(f"unknown primitive {primitive!r}; one of {PRIMITIVES}")
    return table[primitive](*inputs)


def backward(output: Variable, wrt) -> list[np.ndarray]:
    """Gradients of a scalar output with respect to the given leaves.

    Leaves not reachable from the output get zero gradients of their shape.
    """
    tape = output.tape
    if output.value.size != 1:
        raise NotScalarOutput(f"output has shape {output.value.shape}")
    wrt = list(wrt)
    for v in wrt:
        if v.tape is not tape:
            raise ValueError("wrt variable is not on the output's tape")

    adjoints: list = [None] * (output.index + 1)
    adjoints[output.index] = np.ones_like(output.value)
    for i in range(output.index, -1, -1):
        g = adjoints[i]
        if g is None:
            continue
        node = tape.nodes[i]
        for parent, vjp in zip(node.parents, node.vjps):
            contrib = vjp(g)
            if adjoints[parent] is None:
                adjoints[parent] = contrib
            else:
                adjoints[parent] = adjoints[parent] + contrib

    out = []
    for v in wrt:
        g = adjoints[v.index] if v.index <= output.index else None
        out.append(np.zeros_like(v.value) if g is None else np.asarray(g, dtype=np.float64))
    return out
