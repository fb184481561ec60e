"""ReLU, PReLU, Mish and GCU with closed-form derivatives.

PReLU slopes are per channel, with the channel on axis 1 (NCHW feature maps
or [N, units] dense activations).  The derivative tests use a strict
``z > 0``, so ``z == 0`` takes the zero branch for ReLU and the slope branch
for PReLU.
"""
import enum
import math

import numpy as np

from . import autodiff as ad
from .errors import NonFiniteValue, ShapeMismatch
from .tensor import make_rng

PRELU_INIT = 0.25


class Activation(enum.Enum):
    RELU = "relu"
    PRELU = "prelu"
    MISH = "mish"
    GCU = "gcu"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            choices = "|".join(k.value for k in cls)
            raise ValueError(f"unknown activation {name!r} (expected {choices})") from None

    @property
    def label(self):
        return {"relu": "ReLU", "prelu": "PReLU", "mish": "Mish", "gcu": "GCU"}[self.value]

    def __str__(self):
        return self.value


def _channel_view(alpha, z):
    alpha = np.asarray(alpha, dtype=z.dtype)
    if alpha.ndim == 0:
        return alpha
    if z.ndim < 2 or alpha.shape != (z.shape[1],):
        raise ShapeMismatch(f"PReLU slopes of shape {alpha.shape} for input {z.shape}")
    return alpha.reshape((1, -1) + (1,) * (z.ndim - 2))


def softplus(z):
    return np.maximum(z, 0) + np.log1p(np.exp(-np.abs(z)))


def sigmoid(z):
    # split by sign so exp never overflows
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1 / (1 + e), e / (1 + e))


def _check(z):
    if not np.all(np.isfinite(z)):
        raise NonFiniteValue("activation input contains NaN or Inf")


def act_forward(kind, z, alpha=None):
    kind = Activation.parse(kind)
    z = np.asarray(z)
    _check(z)
    if kind is Activation.RELU:
        return np.maximum(z, 0).astype(z.dtype, copy=False)
    if kind is Activation.PRELU:
        a = _channel_view(PRELU_INIT if alpha is None else alpha, z)
        return np.where(z > 0, z, a * z).astype(z.dtype, copy=False)
    if kind is Activation.MISH:
        return z * np.tanh(softplus(z))
    return z * np.cos(z)


def act_derivative(kind, z, alpha=None):
    kind = Activation.parse(kind)
    z = np.asarray(z)
    _check(z)
    if kind is Activation.RELU:
        return (z > 0).astype(z.dtype)
    if kind is Activation.PRELU:
        a = _channel_view(PRELU_INIT if alpha is None else alpha, z)
        return np.where(z > 0, 1, a).astype(z.dtype)
    if kind is Activation.MISH:
        t = np.tanh(softplus(z))
        return t + z * (1 - t * t) * sigmoid(z)
    return np.cos(z) - z * np.sin(z)


def prelu_param_grad(z, upstream):
    """dL/dalpha per channel: sum of ``upstream * z`` over elements with ``z < 0``."""
    z = np.asarray(z)
    upstream = np.asarray(upstream)
    if z.shape != upstream.shape:
        raise ShapeMismatch(f"z {z.shape} vs upstream {upstream.shape}")
    if z.ndim < 2:
        raise ShapeMismatch("PReLU input needs a channel axis at position 1")
    contrib = np.where(z < 0, upstream * z, 0)
    axes = (0,) + tuple(range(2, z.ndim))
    return contrib.sum(axis=axes)


def gcu_zeros(n):
    """The ``n`` smallest positive zeros of z*cos(z); the origin is also a zero."""
    if n < 1:
        raise ValueError("n must be positive")
    return [math.pi / 2 + k * math.pi for k in range(n)]


def activation(x, kind, alpha=None):
    """Record an activation on ``x``'s tape.  ``alpha`` is the PReLU slope node."""
    kind = Activation.parse(kind)
    z = x.value
    if kind is Activation.PRELU:
        if alpha is None:
            raise ValueError("PReLU needs a slope node")
        a = alpha.value
        value = act_forward(kind, z, a)

        def prelu_rule(g):
            return g * act_derivative(kind, z, a), prelu_param_grad(z, g).astype(a.dtype)

        return x.tape.record("prelu", (x, alpha), value, prelu_rule)
    value = act_forward(kind, z)
    return x.tape.record(kind.value, (x,), value, lambda g: (g * act_derivative(kind, z),))


def derivative_error(kind, points=1000, seed=0, eps=1e-5, kink_gap=1e-4):
    """Max relative error of the closed-form derivative over seeded points in [-5, 5].

    Points within ``kink_gap`` of zero are skipped for ReLU and PReLU.
    """
    kind = Activation.parse(kind)
    z = make_rng(seed).uniform(-5, 5, points)
    if kind in (Activation.RELU, Activation.PRELU):
        z = z[np.abs(z) > kink_gap]

    def f(tape, node):
        if kind is Activation.PRELU:
            # one channel, so the slope vector has a single entry
            return ad.total(activation(ad.reshape(node, (-1, 1)), kind, tape.leaf(np.array([0.25]))))
        return ad.total(activation(node, kind))

    tape_err = ad.grad_check(f, z, eps)
    numeric = (act_forward(kind, z + eps, 0.25) - act_forward(kind, z - eps, 0.25)) / (2 * eps)
    closed = act_derivative(kind, z, 0.25)
    direct_err = float(np.max(np.abs(closed - numeric) / np.maximum(1.0, np.abs(numeric))))
    return max(tape_err, direct_err)
