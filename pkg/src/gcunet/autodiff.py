"""Tape-based reverse-mode differentiation.

A :class:`Tape` is rebuilt for every forward pass.  Each differentiable
operation appends a :class:`Node` holding its value and a backward rule that
maps the upstream gradient to one gradient per input.  :meth:`Tape.backward`
sweeps the tape once in descending id order, summing gradients for nodes
with several consumers.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import tensor as T
from .errors import NonFiniteValue, NonScalarOutput, ShapeMismatch, UnknownNode

BackwardRule = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass(eq=False)
class Node:
    id: int
    op: str
    input_ids: tuple
    value: np.ndarray
    backward_rule: Optional[BackwardRule]
    tape: "Tape" = field(repr=False)
    name: Optional[str] = None

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    def __init__(self):
        self.nodes = []
        self.parameter_ids = set()
        self.named = {}

    def __len__(self):
        return len(self.nodes)

    def __getitem__(self, node_id):
        try:
            return self.nodes[node_id]
        except (IndexError, TypeError):
            raise UnknownNode(node_id) from None

    def leaf(self, value, *, trainable=False, name=None):
        node = self.record("leaf", (), np.asarray(value), None, name=name)
        if trainable:
            self.parameter_ids.add(node.id)
        if name is not None:
            self.named[name] = node.id
        return node

    def clear(self):
        """Drop every node.  Nodes and the tape reference each other, so releasing
        them eagerly keeps large intermediates from waiting on the cycle collector."""
        self.nodes.clear()
        self.parameter_ids.clear()
        self.named.clear()

    def constant(self, value):
        return self.leaf(value)

    def record(self, op, inputs, value, backward_rule, *, name=None):
        ids = []
        for inp in inputs:
            nid = inp.id if isinstance(inp, Node) else inp
            if isinstance(inp, Node) and inp.tape is not self:
                raise UnknownNode(f"node {nid} belongs to another tape")
            if not isinstance(nid, (int, np.integer)) or not 0 <= nid < len(self.nodes):
                raise UnknownNode(nid)
            ids.append(int(nid))
        node = Node(len(self.nodes), op, tuple(ids), value, backward_rule, self, name)
        self.nodes.append(node)
        return node

    def backward(self, output):
        """Gradient of the scalar ``output`` with respect to every node on the tape.

        Nodes the output does not depend on get all-zero gradients.
        """
        out = self[output.id if isinstance(output, Node) else output]
        if out.value.size != 1 or out.value.ndim > 1:
            raise NonScalarOutput(f"backward needs a scalar output, got shape {out.value.shape}")
        grads = {out.id: np.ones_like(out.value)}
        for node in reversed(self.nodes[:out.id + 1]):
            g = grads.get(node.id)
            if g is None or node.backward_rule is None:
                continue
            for nid, gi in zip(node.input_ids, node.backward_rule(g)):
                if gi is None:
                    continue
                inp = self.nodes[nid]
                if gi.shape != inp.value.shape:
                    raise ShapeMismatch(
                        f"{node.op} produced gradient {gi.shape} for input of shape {inp.value.shape}")
                if nid in grads:
                    grads[nid] = grads[nid] + gi
                else:
                    grads[nid] = gi
        for node in self.nodes:
            if node.id not in grads:
                grads[node.id] = np.zeros_like(node.value)
        return grads

    def parameter_grads(self, grads):
        """Map parameter names to gradients from a :meth:`backward` result."""
        return {name: grads[nid] for name, nid in self.named.items() if nid in self.parameter_ids}


def backward(tape, output):
    return tape.backward(output)


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Node):
            return x.tape
    raise TypeError("at least one operand must be a Node")


def _as_node(tape, x):
    return x if isinstance(x, Node) else tape.constant(np.asarray(x))


def add(a, b):
    tape = _tape_of(a, b)
    if isinstance(b, Node):
        value = T.elementwise("add", a.value, b.value)
        return tape.record("add", (a, b), value, lambda g: (g, g))
    return tape.record("add", (a,), T.elementwise("add", a.value, b), lambda g: (g,))


def sub(a, b):
    tape = _tape_of(a, b)
    if isinstance(b, Node):
        value = T.elementwise("sub", a.value, b.value)
        return tape.record("sub", (a, b), value, lambda g: (g, -g))
    return tape.record("sub", (a,), T.elementwise("sub", a.value, b), lambda g: (g,))


def mul(a, b):
    tape = _tape_of(a, b)
    if isinstance(b, Node):
        av, bv = a.value, b.value
        value = T.elementwise("mul", av, bv)
        return tape.record("mul", (a, b), value, lambda g: (g * bv, g * av))
    value = T.elementwise("mul", a.value, b)
    return tape.record("mul", (a,), value, lambda g: (g * b,))


def matmul(a, b):
    av, bv = a.value, b.value
    value = T.matmul(av, bv)
    return a.tape.record("matmul", (a, b), value, lambda g: (g @ bv.T, av.T @ g))


def add_bias(x, b):
    """``x`` [N, F, ...] plus a per-feature bias ``b`` [F] along axis 1."""
    if b.value.ndim != 1 or x.value.shape[1] != b.value.shape[0]:
        raise ShapeMismatch(f"bias {b.value.shape} for input {x.value.shape}")
    expand = (slice(None),) + (None,) * (x.value.ndim - 2)
    value = x.value + b.value[expand]
    axes = (0,) + tuple(range(2, x.value.ndim))
    return x.tape.record("add_bias", (x, b), value, lambda g: (g, g.sum(axis=axes)))


def total(x):
    value = np.asarray(x.value.sum(), dtype=x.value.dtype)
    shape = x.value.shape
    return x.tape.record("sum", (x,), value, lambda g: (np.full(shape, g, dtype=x.value.dtype),))


def mean(x):
    n = x.value.size
    value = np.asarray(x.value.mean(), dtype=x.value.dtype)
    shape = x.value.shape
    return x.tape.record("mean", (x,), value, lambda g: (np.full(shape, g / n, dtype=x.value.dtype),))


def reshape(x, shape):
    old = x.value.shape
    return x.tape.record("reshape", (x,), x.value.reshape(shape), lambda g: (g.reshape(old),))


def flatten(x):
    return reshape(x, (x.value.shape[0], -1))


def conv2d(x, w, b, stride=1, padding=0):
    value, cols = T.conv2d_with_cols(x.value, w.value, b.value, stride, padding)
    x_shape, wv = x.value.shape, w.value

    def rule(g):
        return T.conv2d_backward(g, x_shape, wv, cols, stride, padding)

    return x.tape.record("conv2d", (x, w, b), value, rule)


def maxpool2d(x, window, stride):
    value, argmax = T.maxpool2d(x.value, window, stride)
    x_shape = x.value.shape
    return x.tape.record(
        "maxpool2d", (x,), value,
        lambda g: (T.maxpool2d_backward(g, argmax, x_shape, window, stride),))


def grad_check(f, x, eps=1e-5):
    """Max relative error between tape gradients and central differences.

    ``f(tape, node)`` must build a scalar node from the leaf ``node``.  The
    error per coordinate is ``|analytic - numeric| / max(1, |numeric|)``.
    Run it with 64-bit inputs.
    """
    x = np.array(x, dtype=np.float64)

    def value_at(point):
        tape = Tape()
        v = f(tape, tape.leaf(point)).value
        if not np.all(np.isfinite(v)):
            raise NonFiniteValue(f"f evaluated to {v}")
        return float(v)

    tape = Tape()
    leaf = tape.leaf(x.copy(), trainable=True)
    out = f(tape, leaf)
    if not np.all(np.isfinite(out.value)):
        raise NonFiniteValue(f"f evaluated to {out.value}")
    analytic = tape.backward(out)[leaf.id].ravel()
    if not np.all(np.isfinite(analytic)):
        raise NonFiniteValue("analytic gradient is not finite")
    numeric = np.empty(x.size)
    flat = x.ravel()
    for i in range(x.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = value_at(x)
        flat[i] = orig - eps
        fm = value_at(x)
        flat[i] = orig
        numeric[i] = (fp - fm) / (2 * eps)
    if x.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))))
