"""Differentiable operations recorded on a :class:`~tasnet.autodiff.tape.Tape`.

Operands must have identical shapes; the only implicit broadcast is against
Python scalars (``scale``/``add_scalar``).  Row-vector bias addition is its
own explicit op, ``add_rowvec``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tape import Node, ShapeError


def _tape(*nodes: Node):
    tape = nodes[0].tape
    for n in nodes[1:]:
        if n.tape is not tape:
            raise ValueError("operands live on different tapes")
    return tape


def _same_shape(op: str, a: Node, b: Node) -> None:
    if a.shape != b.shape:
        raise ShapeError(op, a.shape, b.shape)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# -- linear algebra -----------------------------------------------------------


def matmul(a: Node, b: Node) -> Node:
    tape = _tape(a, b)
    if len(a.shape) != 2 or len(b.shape) != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    av, bv = a.value, b.value

    def vjp(g):
        (gc,) = g
        return gc @ bv.T, av.T @ gc

    return tape.push("matmul", (a, b), (av @ bv,), vjp)[0]


def transpose(x: Node, axes: Sequence[int] | None = None) -> Node:
    tape = _tape(x)
    if axes is None:
        axes = tuple(reversed(range(len(x.shape))))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def vjp(g):
        return (np.transpose(g[0], inverse),)

    return tape.push("transpose", (x,), (np.transpose(x.value, axes),), vjp)[0]


def reshape(x: Node, shape: Sequence[int]) -> Node:
    tape = _tape(x)
    old = x.shape
    try:
        out = x.value.reshape(tuple(shape))
    except ValueError:
        raise ShapeError("reshape", old, tuple(shape)) from None

    def vjp(g):
        return (g[0].reshape(old),)

    return tape.push("reshape", (x,), (out,), vjp)[0]


# -- elementwise ----------------------------------------------------------------


def add(a: Node, b: Node) -> Node:
    tape = _tape(a, b)
    _same_shape("add", a, b)
    return tape.push("add", (a, b), (a.value + b.value,), lambda g: (g[0], g[0]))[0]


def sub(a: Node, b: Node) -> Node:
    tape = _tape(a, b)
    _same_shape("sub", a, b)
    return tape.push("sub", (a, b), (a.value - b.value,), lambda g: (g[0], -g[0]))[0]


def mul(a: Node, b: Node) -> Node:
    tape = _tape(a, b)
    _same_shape("mul", a, b)
    av, bv = a.value, b.value
    return tape.push("mul", (a, b), (av * bv,), lambda g: (g[0] * bv, g[0] * av))[0]


def div(a: Node, b: Node, eps: float | None = None) -> Node:
    """``a / b``; without ``eps`` a zero denominator raises ZeroDivisionError."""
    tape = _tape(a, b)
    _same_shape("div", a, b)
    av, bv = a.value, b.value
    if eps is not None:
        bv = bv + eps
    elif np.any(bv == 0):
        raise ZeroDivisionError("div: zero in denominator")
    out = av / bv

    def vjp(g):
        (gc,) = g
        return gc / bv, -gc * out / bv

    return tape.push("div", (a, b), (out,), vjp)[0]


def relu(x: Node) -> Node:
    tape = _tape(x)
    active = x.value > 0  # subgradient 0 at 0
    return tape.push("relu", (x,), (np.where(active, x.value, 0),), lambda g: (g[0] * active,))[0]


def sigmoid(x: Node) -> Node:
    tape = _tape(x)
    y = _sigmoid(x.value)
    return tape.push("sigmoid", (x,), (y,), lambda g: (g[0] * y * (1 - y),))[0]


def tanh(x: Node) -> Node:
    tape = _tape(x)
    y = np.tanh(x.value)
    return tape.push("tanh", (x,), (y,), lambda g: (g[0] * (1 - y * y),))[0]


def scale(x: Node, c: float) -> Node:
    tape = _tape(x)
    return tape.push("scale", (x,), (x.value * c,), lambda g: (g[0] * c,))[0]


def add_scalar(x: Node, c: float) -> Node:
    tape = _tape(x)
    return tape.push("add_scalar", (x,), (x.value + c,), lambda g: (g[0],))[0]


_UNARY = {"relu": relu, "sigmoid": sigmoid, "tanh": tanh}
_BINARY = {"mul": mul, "add": add, "sub": sub, "div": div}


def elementwise(kind: str, *args: Node) -> Node:
    """Dispatch by name: relu, sigmoid, tanh (one operand) or mul, add, sub, div (two)."""
    if kind in _UNARY and len(args) == 1:
        return _UNARY[kind](*args)
    if kind in _BINARY and len(args) == 2:
        return _BINARY[kind](*args)
    raise ValueError(f"unknown elementwise op {kind!r} with {len(args)} operand(s)")


def add_rowvec(x: Node, b: Node) -> Node:
    """Add vector ``b`` to every row of ``x`` (last axis of x must equal len(b))."""
    tape = _tape(x, b)
    if len(b.shape) != 1 or x.shape[-1] != b.shape[0]:
        raise ShapeError("add_rowvec", x.shape, b.shape)
    lead = tuple(range(len(x.shape) - 1))
    return tape.push(
        "add_rowvec", (x, b), (x.value + b.value,), lambda g: (g[0], g[0].sum(axis=lead))
    )[0]


# -- reductions and structure ----------------------------------------------------


def sum_all(x: Node) -> Node:
    tape = _tape(x)
    shape = x.shape

    def vjp(g):
        return (np.full(shape, g[0].reshape(()), dtype=tape.dtype),)

    return tape.push("sum", (x,), (np.sum(x.value).reshape(()),), vjp)[0]


def mean_all(x: Node) -> Node:
    return scale(sum_all(x), 1.0 / x.value.size)


def softmax(x: Node, axis: int) -> Node:
    tape = _tape(x)
    ndim = len(x.shape)
    if not -ndim <= axis < ndim:
        raise ShapeError(f"softmax(axis={axis})", x.shape)
    z = x.value - np.max(x.value, axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / np.sum(e, axis=axis, keepdims=True)

    def vjp(g):
        (gy,) = g
        return (y * (gy - np.sum(gy * y, axis=axis, keepdims=True)),)

    return tape.push("softmax", (x,), (y,), vjp)[0]


def stack(nodes: Sequence[Node], axis: int) -> Node:
    tape = _tape(*nodes)
    for n in nodes[1:]:
        _same_shape("stack", nodes[0], n)
    out = np.stack([n.value for n in nodes], axis=axis)
    count = len(nodes)

    def vjp(g):
        return tuple(np.take(g[0], i, axis=axis) for i in range(count))

    return tape.push("stack", tuple(nodes), (out,), vjp)[0]


def concat(nodes: Sequence[Node], axis: int) -> Node:
    tape = _tape(*nodes)
    try:
        out = np.concatenate([n.value for n in nodes], axis=axis)
    except ValueError:
        raise ShapeError("concat", *(n.shape for n in nodes)) from None
    splits = np.cumsum([n.shape[axis] for n in nodes])[:-1]

    def vjp(g):
        return tuple(np.split(g[0], splits, axis=axis))

    return tape.push("concat", tuple(nodes), (out,), vjp)[0]


def flip(x: Node, axis: int) -> Node:
    tape = _tape(x)
    return tape.push("flip", (x,), (np.flip(x.value, axis=axis),), lambda g: (np.flip(g[0], axis=axis),))[0]


def slice_(x: Node, index) -> Node:
    """Basic (non-fancy) indexing, e.g. ``slice_(x, np.s_[:, :, :100])``."""
    tape = _tape(x)
    shape = x.shape
    out = x.value[index]

    def vjp(g):
        full = np.zeros(shape, dtype=tape.dtype)
        full[index] = g[0]
        return (full,)

    return tape.push("slice", (x,), (out,), vjp)[0]


def take(x: Node, flat_indices) -> Node:
    """Gather entries of the flattened ``x``; repeated indices accumulate."""
    tape = _tape(x)
    idx = np.asarray(flat_indices, dtype=np.intp)
    shape = x.shape

    def vjp(g):
        full = np.zeros(int(np.prod(shape)), dtype=tape.dtype)
        np.add.at(full, idx, g[0])
        return (full.reshape(shape),)

    return tape.push("take", (x,), (x.value.reshape(-1)[idx],), vjp)[0]


# -- normalization ----------------------------------------------------------------


def layer_norm(w: Node, gain: Node, bias: Node, eps: float = 1e-8) -> Node:
    """Per-row ``gain / sigma * (w - mu) + bias`` over the last axis.

    sigma is the population standard deviation with ``eps`` inside the root.
    """
    tape = _tape(w, gain, bias)
    n = w.shape[-1]
    if gain.shape != (n,) or bias.shape != (n,):
        raise ShapeError("layer_norm", w.shape, gain.shape, bias.shape)
    wv, gv = w.value, gain.value
    centered = wv - wv.mean(axis=-1, keepdims=True)
    inv_sigma = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_sigma
    out = gv * xhat + bias.value
    lead = tuple(range(len(w.shape) - 1))

    def vjp(g):
        (gy,) = g
        gx = gy * gv
        dw = inv_sigma * (
            gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True)
        )
        return dw, (gy * xhat).sum(axis=lead), gy.sum(axis=lead)

    return tape.push("layer_norm", (w, gain, bias), (out,), vjp)[0]
