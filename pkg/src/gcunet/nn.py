"""Layers, the softmax cross-entropy head, and the scaled AlexNet builder."""
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import autodiff as ad
from . import tensor as T
from .activations import PRELU_INIT, Activation, activation
from .errors import InvalidShape, LabelOutOfRange, ShapeMismatch


@dataclass(frozen=True)
class Conv:
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0


@dataclass(frozen=True)
class MaxPool:
    window: int
    stride: int


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Dense:
    units: int


@dataclass(frozen=True)
class Dropout:
    rate: float


@dataclass(frozen=True)
class Act:
    kind: Activation


LayerSpec = Union[Conv, MaxPool, Flatten, Dense, Dropout, Act]


@dataclass
class ModelSpec:
    input_shape: tuple
    layers: list
    conv_activation: Activation
    dense_activation: Activation
    num_classes: int

    def __post_init__(self):
        self.input_shape = tuple(self.input_shape)
        self.conv_activation = Activation.parse(self.conv_activation)
        self.dense_activation = Activation.parse(self.dense_activation)

    def check(self):
        """Validate extents and the activation placement rule; return the per-layer output shapes."""
        layers = self.layers
        dense_idx = [i for i, l in enumerate(layers) if isinstance(l, Dense)]
        if not dense_idx:
            raise ValueError("model needs at least one Dense layer")
        for i, layer in enumerate(layers):
            if isinstance(layer, Dropout) and not 0 <= layer.rate < 1:
                raise ValueError(f"layer {i}: dropout rate {layer.rate} outside [0, 1)")
            if isinstance(layer, (Conv, Dense)):
                nxt = layers[i + 1] if i + 1 < len(layers) else None
                if isinstance(layer, Conv):
                    want = self.conv_activation
                elif i == dense_idx[-1]:
                    if nxt is not None:
                        raise ValueError("the final Dense layer must be the last layer (logits)")
                    if layer.units != self.num_classes:
                        raise ValueError("the final Dense layer must have num_classes units")
                    continue
                else:
                    want = self.dense_activation
                if not (isinstance(nxt, Act) and nxt.kind is want):
                    raise ValueError(f"layer {i} ({layer}) must be followed by Act({want.value})")
        return infer_shapes(self)

    def to_text(self):
        """Human-readable one-layer-per-line description."""
        lines = [
            f"input_shape = {'x'.join(map(str, self.input_shape))}",
            f"conv_activation = {self.conv_activation.value}",
            f"dense_activation = {self.dense_activation.value}",
            f"num_classes = {self.num_classes}",
        ]
        for layer in self.layers:
            lines.append(f"layer = {_layer_text(layer)}")
        return "\n".join(lines) + "\n"


def _layer_text(layer):
    if isinstance(layer, Conv):
        return f"conv {layer.out_channels} {layer.kernel}x{layer.kernel} s{layer.stride} p{layer.padding}"
    if isinstance(layer, MaxPool):
        return f"maxpool {layer.window} s{layer.stride}"
    if isinstance(layer, Flatten):
        return "flatten"
    if isinstance(layer, Dense):
        return f"dense {layer.units}"
    if isinstance(layer, Dropout):
        return f"dropout {layer.rate}"
    return f"act {layer.kind.value}"


def infer_shapes(spec):
    shape = tuple(spec.input_shape)
    shapes = []
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Conv):
            if len(shape) != 3:
                raise InvalidShape(f"layer {i}: Conv after flatten")
            c, h, w = shape
            k, s, p = layer.kernel, layer.stride, layer.padding
            if layer.out_channels < 1 or k < 1:
                raise ValueError(f"layer {i}: Conv extents must be positive")
            if h + 2 * p < k or w + 2 * p < k:
                raise InvalidShape(f"layer {i}: spatial extent {h}x{w} too small for kernel {k}")
            shape = (layer.out_channels, (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1)
        elif isinstance(layer, MaxPool):
            c, h, w = shape
            if h < layer.window or w < layer.window:
                raise InvalidShape(f"layer {i}: spatial extent {h}x{w} collapses below 1 in pooling")
            shape = (c, T.pool_extent(h, layer.window, layer.stride),
                     T.pool_extent(w, layer.window, layer.stride))
        elif isinstance(layer, Flatten):
            shape = (int(np.prod(shape)),)
        elif isinstance(layer, Dense):
            if layer.units < 1:
                raise ValueError(f"layer {i}: Dense units must be positive")
            if len(shape) != 1:
                raise InvalidShape(f"layer {i}: Dense needs a flattened input, got {shape}")
            shape = (layer.units,)
        shapes.append(shape)
    return shapes


def alexnet_spec(input_shape, conv_activation, dense_activation, num_classes=10):
    """The scaled 5-conv / 3-dense AlexNet used for 28x28 and 32x32 images."""
    ca = Activation.parse(conv_activation)
    da = Activation.parse(dense_activation)
    layers = [
        Conv(32, 3, 1, 1), Act(ca), MaxPool(2, 2),
        Conv(64, 3, 1, 1), Act(ca), MaxPool(2, 2),
        Conv(128, 3, 1, 1), Act(ca),
        Conv(128, 3, 1, 1), Act(ca),
        Conv(64, 3, 1, 1), Act(ca), MaxPool(2, 2),
        Flatten(),
        Dense(256), Act(da), Dropout(0.5),
        Dense(128), Act(da), Dropout(0.5),
        Dense(num_classes),
    ]
    return ModelSpec(tuple(input_shape), layers, ca, da, num_classes)


@dataclass
class Model:
    spec: ModelSpec
    parameters: dict
    mode: str = "train"
    rng: np.random.Generator = field(default=None, repr=False)

    def train(self):
        self.mode = "train"
        return self

    def eval(self):
        self.mode = "eval"
        return self

    @property
    def dtype(self):
        return next(iter(self.parameters.values())).dtype

    def num_parameters(self):
        return sum(p.size for p in self.parameters.values())


def build_model(spec, seed, dtype=None):
    """Materialize ``spec`` with He-uniform weights, zero biases, and 0.25 PReLU slopes."""
    dtype = dtype or T.default_dtype()
    shapes = spec.check()
    rng = T.make_rng(seed)
    params = {}
    prev = tuple(spec.input_shape)
    for i, (layer, out_shape) in enumerate(zip(spec.layers, shapes)):
        if isinstance(layer, Conv):
            fan_in = prev[0] * layer.kernel * layer.kernel
            bound = np.sqrt(6.0 / fan_in)
            w_shape = (layer.out_channels, prev[0], layer.kernel, layer.kernel)
            params[f"conv{i}.w"] = rng.uniform(-bound, bound, w_shape).astype(dtype)
            params[f"conv{i}.b"] = np.zeros(layer.out_channels, dtype=dtype)
        elif isinstance(layer, Dense):
            fan_in = prev[0]
            bound = np.sqrt(6.0 / fan_in)
            params[f"dense{i}.w"] = rng.uniform(-bound, bound, (fan_in, layer.units)).astype(dtype)
            params[f"dense{i}.b"] = np.zeros(layer.units, dtype=dtype)
        elif isinstance(layer, Act) and layer.kind is Activation.PRELU:
            params[f"act{i}.alpha"] = np.full(prev[0], PRELU_INIT, dtype=dtype)
        prev = out_shape
    # dropout masks draw from a stream independent of the init stream
    return Model(spec, params, "train", T.make_rng([seed, 1]))


def build_alexnet(input_shape, conv_activation, dense_activation, num_classes=10, seed=0, dtype=None):
    return build_model(alexnet_spec(input_shape, conv_activation, dense_activation, num_classes),
                       seed, dtype)


def dropout(x, rate, rng):
    """Inverted dropout: zero with probability ``rate``, scale survivors by 1/(1-rate)."""
    if rate == 0:
        return x
    keep = (rng.random(x.value.shape) >= rate).astype(x.value.dtype) / (1 - rate)
    return x.tape.record("dropout", (x,), x.value * keep, lambda g: (g * keep,))


def forward(model, batch, tape, overrides=None):
    """Record the model on ``tape`` and return the logits node.

    ``overrides`` maps parameter names to nodes already on ``tape`` that
    replace the stored parameter (used by gradient checks).
    """
    spec = model.spec
    batch = np.asarray(batch)
    if batch.ndim != 4 or batch.shape[1:] != spec.input_shape:
        raise ShapeMismatch(f"batch {batch.shape} does not match input {spec.input_shape}")
    p = dict(overrides or {})
    for name, value in model.parameters.items():
        if name not in p:
            p[name] = tape.leaf(value, trainable=True, name=name)
    x = tape.leaf(batch.astype(model.dtype, copy=False))
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Conv):
            x = ad.conv2d(x, p[f"conv{i}.w"], p[f"conv{i}.b"], layer.stride, layer.padding)
        elif isinstance(layer, MaxPool):
            x = ad.maxpool2d(x, layer.window, layer.stride)
        elif isinstance(layer, Flatten):
            x = ad.flatten(x)
        elif isinstance(layer, Dense):
            x = ad.add_bias(ad.matmul(x, p[f"dense{i}.w"]), p[f"dense{i}.b"])
        elif isinstance(layer, Dropout):
            if model.mode == "train":
                x = dropout(x, layer.rate, model.rng)
        elif isinstance(layer, Act):
            x = activation(x, layer.kind, p.get(f"act{i}.alpha"))
    return x


def predict(model, images, batch_size=256):
    """Eval-mode logits for a whole array, batch by batch."""
    mode = model.mode
    model.eval()
    try:
        out = []
        for i in range(0, len(images), batch_size):
            tape = ad.Tape()
            out.append(forward(model, images[i:i + batch_size], tape).value)
            tape.clear()
    finally:
        model.mode = mode
    return np.concatenate(out) if out else np.zeros((0, model.spec.num_classes))


def _check_labels(labels, n, k):
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ShapeMismatch(f"{labels.shape[0] if labels.ndim else 0} labels for {n} rows")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise LabelOutOfRange(f"labels must lie in [0, {k})")
    return labels.astype(np.intp)


def log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits):
    return np.exp(log_softmax(logits))


def softmax_xent(logits, labels):
    """Mean sparse categorical cross-entropy.  Returns ``(loss_node, per_example)``."""
    z = logits.value
    if z.ndim != 2:
        raise ShapeMismatch(f"logits must be [N, K], got {z.shape}")
    n, k = z.shape
    labels = _check_labels(labels, n, k)
    logp = log_softmax(z)
    per_example = -logp[np.arange(n), labels]
    loss = np.asarray(per_example.mean(), dtype=z.dtype)

    def rule(g):
        d = np.exp(logp)
        d[np.arange(n), labels] -= 1
        return (d * (g / n),)

    return logits.tape.record("softmax_xent", (logits,), loss, rule), per_example


def accuracy(logits, labels):
    logits = np.asarray(logits.value if isinstance(logits, ad.Node) else logits)
    n, k = logits.shape
    labels = _check_labels(labels, n, k)
    if n == 0:
        return 0.0
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def miniature_spec(conv_activation, dense_activation="relu", input_shape=(1, 8, 8),
                   channels=4, num_classes=3):
    """Two conv blocks and two dense layers, small enough for exhaustive gradient checks."""
    ca = Activation.parse(conv_activation)
    da = Activation.parse(dense_activation)
    layers = [
        Conv(channels, 3, 1, 1), Act(ca), MaxPool(2, 2),
        Conv(channels, 3, 1, 1), Act(ca), MaxPool(2, 2),
        Flatten(), Dense(8), Act(da), Dense(num_classes),
    ]
    return ModelSpec(tuple(input_shape), layers, ca, da, num_classes)


def model_grad_check(model, batch, labels, eps=1e-5):
    """Max relative gradient error per parameter, comparing the tape with central differences.

    Dropout is disabled for the check.  Use a float64 model.
    """
    mode = model.mode
    model.eval()
    errors = {}
    try:
        for name in model.parameters:
            def f(tape, node, name=name):
                logits = forward(model, batch, tape, {name: node})
                return softmax_xent(logits, labels)[0]
            errors[name] = ad.grad_check(f, model.parameters[name], eps)
    finally:
        model.mode = mode
    return errors
