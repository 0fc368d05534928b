"""Reverse-mode differentiation tape.

Every differentiable operation appends one :class:`Record` to the tape.  The
record names the op, the node ids it read, the node ids it produced and a
vector-Jacobian closure holding whatever intermediates the op saved.  The
backward pass walks the records once, in reverse order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for an operation."""

    def __init__(self, op: str, *shapes: tuple[int, ...]):
        self.op = op
        self.shapes = shapes
        joined = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {joined}")


class NonFiniteError(FloatingPointError):
    """An operation produced (or was fed) NaN or Inf."""


@dataclass(frozen=True)
class Record:
    kind: str
    inputs: tuple[int, ...]
    outputs: tuple[int, ...]
    vjp: Callable[[tuple[np.ndarray, ...]], Sequence[np.ndarray | None]]


class Node:
    """Handle to one value stored on a tape."""

    __slots__ = ("tape", "id")

    def __init__(self, tape: "Tape", node_id: int):
        self.tape = tape
        self.id = node_id

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.id]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.tape.values[self.id].shape

    def __repr__(self) -> str:
        return f"Node(id={self.id}, shape={self.shape})"


class Gradients:
    """Adjoints produced by :meth:`Tape.backward`.

    Looking up a node the loss does not depend on yields zeros of the node's
    shape rather than an error.
    """

    def __init__(self, tape: "Tape", adjoints: list[np.ndarray | None]):
        self._tape = tape
        self._adjoints = adjoints

    def __getitem__(self, node: Node) -> np.ndarray:
        if node.tape is not self._tape:
            raise ValueError("node belongs to a different tape")
        g = self._adjoints[node.id]
        if g is None:
            return np.zeros_like(node.value)
        return g

    def reached(self, node: Node) -> bool:
        return self._adjoints[node.id] is not None


class Tape:
    """Linear record of operations for one forward pass.

    ``dtype`` fixes the precision of every value (float64 for gradient
    checks, float32 for training).  With ``record=False`` the ops only
    compute values; this is the inference path.
    """

    def __init__(self, dtype=np.float32, record: bool = True, check_finite: bool = True):
        self.dtype = np.dtype(dtype)
        if self.dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
            raise ValueError(f"unsupported tape dtype {self.dtype}")
        self.record = record
        self.check_finite = check_finite
        self.values: list[np.ndarray] = []
        self.records: list[Record] = []

    def __len__(self) -> int:
        return len(self.values)

    def _store(self, value: np.ndarray) -> Node:
        self.values.append(value)
        return Node(self, len(self.values) - 1)

    def variable(self, array, copy: bool = True, check: bool = True) -> Node:
        """Place an input (parameter or constant) on the tape.

        With ``copy=False`` an array already in the tape dtype is stored by
        reference and must not be mutated while the tape is in use.
        ``check=False`` skips the finiteness scan for inputs validated earlier.
        """
        value = np.array(array, dtype=self.dtype, copy=copy or None)
        if check and self.check_finite and not np.all(np.isfinite(value)):
            raise NonFiniteError("non-finite value passed to tape.variable")
        return self._store(value)

    constant = variable

    def push(self, kind: str, inputs: Sequence[Node], outputs: Sequence[np.ndarray], vjp) -> tuple[Node, ...]:
        """Store op results and, when recording, the record that differentiates them."""
        for node in inputs:
            if node.tape is not self:
                raise ValueError(f"{kind}: operand from a different tape")
        nodes = []
        for out in outputs:
            out = np.asarray(out, dtype=self.dtype)
            if self.check_finite and not np.all(np.isfinite(out)):
                raise NonFiniteError(f"{kind} produced a non-finite value")
            nodes.append(self._store(out))
        if self.record:
            self.records.append(
                Record(kind, tuple(n.id for n in inputs), tuple(n.id for n in nodes), vjp)
            )
        return tuple(nodes)

    def backward(self, loss: Node) -> Gradients:
        """Propagate adjoints from a scalar ``loss`` to every node."""
        if not self.record:
            raise RuntimeError("tape was created with record=False")
        if loss.tape is not self:
            raise ValueError("loss belongs to a different tape")
        if loss.value.size != 1:
            raise ShapeError("backward (loss must be scalar)", loss.shape)
        adjoints: list[np.ndarray | None] = [None] * len(self.values)
        adjoints[loss.id] = np.ones_like(loss.value)
        for rec in reversed(self.records):
            outs = [adjoints[i] for i in rec.outputs]
            if all(g is None for g in outs):
                continue
            outs = tuple(
                np.zeros_like(self.values[i]) if g is None else g
                for i, g in zip(rec.outputs, outs)
            )
            in_grads = rec.vjp(outs)
            for i, g in zip(rec.inputs, in_grads):
                if g is None:
                    continue
                if adjoints[i] is None:
                    adjoints[i] = np.array(g, dtype=self.dtype)
                else:
                    adjoints[i] = adjoints[i] + g
        return Gradients(self, adjoints)
