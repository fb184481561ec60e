"""Experiment harness, single-neuron XOR search, and table rendering."""
import csv
import dataclasses
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from . import autodiff as ad
from . import data as D
from . import nn
from .activations import Activation, act_forward
from .errors import ConfigError, DataMissing, DivergedRun, NonFiniteValue
from .optim import SGD, Adam, clip_grad_norm

DATASETS = {"mnist": ((1, 28, 28), D.load_mnist), "cifar10": ((3, 32, 32), D.load_cifar10)}

# full-length epochs and optimizer per dataset; hyperparameters are the usual library defaults
DATASET_DEFAULTS = {
    "mnist": {"optimizer": "adam", "epochs": 40},
    "cifar10": {"optimizer": "sgd", "epochs": 50},
}
OPTIMIZER_DEFAULTS = {
    "adam": {"lr": 1e-3, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
    "sgd": {"lr": 0.01, "momentum": 0.9},
}


@dataclass
class ExperimentConfig:
    dataset: str
    conv_activation: str = "relu"
    dense_activation: str = "relu"
    optimizer: Optional[str] = None
    lr: Optional[float] = None
    momentum: Optional[float] = None
    beta1: Optional[float] = None
    beta2: Optional[float] = None
    eps: Optional[float] = None
    epochs: Optional[int] = None
    batch_size: int = 128
    val_fraction: float = 0.1
    seed: int = 0
    train_subset: Optional[int] = None
    grad_clip: Optional[float] = None
    data_dir: Optional[str] = None

    def __post_init__(self):
        self.dataset = str(self.dataset).lower()
        if self.dataset not in DATASETS:
            raise ConfigError(f"dataset must be one of {sorted(DATASETS)}, got {self.dataset!r}")
        try:
            self.conv_activation = Activation.parse(self.conv_activation).value
            self.dense_activation = Activation.parse(self.dense_activation).value
        except ValueError as e:
            raise ConfigError(str(e)) from None
        for key, value in DATASET_DEFAULTS[self.dataset].items():
            if getattr(self, key) is None:
                setattr(self, key, value)
        self.optimizer = self.optimizer.lower()
        if self.optimizer not in OPTIMIZER_DEFAULTS:
            raise ConfigError(f"optimizer must be adam or sgd, got {self.optimizer!r}")
        for key, value in OPTIMIZER_DEFAULTS[self.optimizer].items():
            if getattr(self, key) is None:
                setattr(self, key, value)
        if self.data_dir is None:
            self.data_dir = str(D.default_data_dir(self.dataset))
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0 < self.val_fraction < 1:
            raise ConfigError("val_fraction must lie in (0, 1)")
        if self.train_subset is not None and self.train_subset < 2:
            raise ConfigError("train_subset must be >= 2")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError("grad_clip must be positive")

    def make_optimizer(self):
        if self.optimizer == "adam":
            return Adam(self.lr, self.beta1, self.beta2, self.eps)
        return SGD(self.lr, self.momentum)

    def to_dict(self):
        d = dataclasses.asdict(self)
        # hyperparameters of the other optimizer are meaningless for this run
        unused = {"adam": ("momentum",), "sgd": ("beta1", "beta2", "eps")}[self.optimizer]
        for key in unused:
            d.pop(key)
        return d


PRESETS = {
    "mnist-full": dict(dataset="mnist", epochs=40),
    "cifar10-full": dict(dataset="cifar10", epochs=50),
    "mnist-desk": dict(dataset="mnist", epochs=3, batch_size=128, train_subset=8192),
    "cifar10-desk": dict(dataset="cifar10", epochs=5, batch_size=64, train_subset=10000),
}


def preset(name, **overrides):
    return ExperimentConfig(**{**PRESETS[name], **overrides})


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float


@dataclass
class RunRecord:
    config: dict
    history: list
    test_accuracy: float
    test_loss: float
    initial_train_loss: float
    normalization: str = "pixels / 255"
    library_version: str = __version__
    wall_clock_seconds: Optional[float] = field(default=None, compare=False)

    @property
    def final(self):
        return self.history[-1]

    def to_dict(self, timing=True):
        d = dataclasses.asdict(self)
        if not timing:
            d.pop("wall_clock_seconds")
        return d

    def to_json(self, timing=True):
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=True) + "\n"

    def canonical_bytes(self):
        """Serialized record without wall-clock time; identical across repeated runs."""
        return self.to_json(timing=False).encode()

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["history"] = [EpochMetrics(**h) for h in d["history"]]
        return cls(**d)

    def save(self, path):
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def evaluate(model, dataset, batch_size=256):
    """(mean loss, accuracy) in eval mode."""
    if len(dataset) == 0:
        return 0.0, 0.0
    logits = nn.predict(model, dataset.images, batch_size)
    loss = -nn.log_softmax(logits.astype(np.float64))[np.arange(len(dataset)), dataset.labels]
    return float(loss.mean()), nn.accuracy(logits, dataset.labels)


def load_data(config):
    input_shape, loader = DATASETS[config.dataset]
    path = Path(config.data_dir)
    if not path.exists():
        raise DataMissing(f"{config.dataset} data directory {path} does not exist")
    train, test = loader(path)
    return input_shape, train, test


def _train_step(model, opt, x, y, grad_clip):
    tape = ad.Tape()
    try:
        logits = nn.forward(model, x, tape)
        loss, _ = nn.softmax_xent(logits, y)
        value = float(loss.value)
        if math.isfinite(value):
            grads = tape.parameter_grads(tape.backward(loss))
            if grad_clip is not None:
                grads, _ = clip_grad_norm(grads, grad_clip)
            opt.step(model.parameters, grads)
        return logits.value, value
    finally:
        tape.clear()


def run_experiment(config, log=None, datasets=None):
    """Train the scaled AlexNet described by ``config`` and return its RunRecord.

    ``log`` receives one formatted line per epoch.  ``datasets`` may supply
    preloaded ``(train, test)`` to skip reading files.
    """
    start = time.perf_counter()
    if datasets is None:
        input_shape, full, test = load_data(config)
    else:
        input_shape = DATASETS[config.dataset][0]
        full, test = datasets
    if config.train_subset is not None:
        if config.train_subset > len(full):
            raise ConfigError(f"train_subset {config.train_subset} exceeds {len(full)} examples")
        full = full.subset(np.arange(config.train_subset))
    train, val = D.split(full, D.SplitSpec(config.val_fraction, config.seed))

    model = nn.build_alexnet(input_shape, config.conv_activation, config.dense_activation,
                             10, seed=config.seed)
    opt = config.make_optimizer()
    history = []
    initial_loss = None
    for epoch in range(1, config.epochs + 1):
        model.train()
        loss_sum = 0.0
        correct = 0
        seen = 0
        for step, (x, y) in enumerate(D.batches(train, config.batch_size, [config.seed, 2, epoch])):
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    logits, value = _train_step(model, opt, x, y, config.grad_clip)
            except NonFiniteValue:
                raise DivergedRun(epoch, step, float("nan")) from None
            if not math.isfinite(value):
                raise DivergedRun(epoch, step, value)
            if initial_loss is None:
                initial_loss = value
            loss_sum += value * len(y)
            correct += int(np.sum(np.argmax(logits, axis=1) == y))
            seen += len(y)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                val_loss, val_acc = evaluate(model, val)
        except NonFiniteValue:
            val_loss = float("nan")
        if not math.isfinite(val_loss):
            raise DivergedRun(epoch, step, val_loss)
        m = EpochMetrics(epoch, loss_sum / seen, correct / seen, val_loss, val_acc)
        history.append(m)
        if log is not None:
            log(f"epoch {epoch}/{config.epochs}  loss {m.train_loss:.4f}  acc {m.train_accuracy:.4f}"
                f"  val_loss {m.val_loss:.4f}  val_acc {m.val_accuracy:.4f}"
                f"  elapsed {time.perf_counter() - start:.1f}s")
    test_loss, test_acc = evaluate(model, test)
    record = RunRecord(config.to_dict(), history, test_acc, test_loss, initial_loss,
                       wall_clock_seconds=round(time.perf_counter() - start, 3))
    return record


@dataclass
class XorResult:
    kind: str
    w1: float
    w2: float
    b: float
    threshold: float
    accuracy: float
    margin: float
    outputs: list


def _best_thresholds(y, labels):
    """Best readout ``y > theta`` per row of ``y`` (shape [G, 4]).

    Returns accuracy, the chosen cut (an output value or -inf), and the
    margin between the lowest output read as 1 and the highest read as 0.
    """
    # candidate thresholds: below everything, or exactly at one of the outputs
    cands = np.concatenate([np.full((len(y), 1), -np.inf), y], axis=1)
    pred = y[:, None, :] > cands[:, :, None]
    acc = (pred == labels.astype(bool)).mean(axis=2)
    lo = np.where(pred, y[:, None, :], np.inf).min(axis=2)
    hi = np.where(pred, -np.inf, y[:, None, :]).max(axis=2)
    margin = np.where(np.isfinite(lo) & np.isfinite(hi), lo - hi, 0.0)
    # accuracy first, then the widest gap
    key = acc * 1e6 + np.tanh(margin)
    k = np.argmax(key, axis=1)
    rows = np.arange(len(y))
    return acc[rows, k], cands[rows, k], margin[rows, k]


def _readout_threshold(outputs, theta):
    above = outputs[outputs > theta]
    if not np.isfinite(theta):
        return float(outputs.min() - 1)
    if above.size == 0:
        return float(theta + 1)
    return float((theta + above.min()) / 2)


def _xor_grid_eval(kind, w1, w2, b, x, labels):
    z = w1[:, None] * x[:, 0] + w2[:, None] * x[:, 1] + b[:, None]
    y = act_forward(kind, z, 0.25 if kind is Activation.PRELU else None)
    acc, theta, margin = _best_thresholds(y, labels)
    return acc, theta, margin, y


def solve_xor_single_neuron(kind, step=math.pi / 8, extent=2 * math.pi, refine_rounds=3):
    """Search weights of y = f(w1*x1 + w2*x2 + b) with a readout ``y > theta`` for XOR.

    A coarse grid over [-extent, extent]^3 is followed by finer grids around
    the best point.  PReLU uses its initial slope 0.25.
    """
    kind = Activation.parse(kind)
    xor = D.xor_dataset(np.float64)
    x, labels = xor.images, xor.labels
    axis = np.arange(-round(extent / step), round(extent / step) + 1) * step
    w1, w2, b = (g.ravel() for g in np.meshgrid(axis, axis, axis, indexing="ij"))
    acc, theta, margin, y = _xor_grid_eval(kind, w1, w2, b, x, labels)
    best = _pick(acc, margin)
    point = np.array([w1[best], w2[best], b[best]])
    best_acc, best_theta, best_margin, best_y = acc[best], theta[best], margin[best], y[best]
    local = np.linspace(-1, 1, 17)
    width = step
    for _ in range(refine_rounds):
        if best_acc == 1.0:
            break
        g1, g2, g3 = (g.ravel() for g in np.meshgrid(*(point[i] + width * local for i in range(3)),
                                                       indexing="ij"))
        a, t, mg, yy = _xor_grid_eval(kind, g1, g2, g3, x, labels)
        i = _pick(a, mg)
        if a[i] > best_acc:
            point = np.array([g1[i], g2[i], g3[i]])
            best_acc, best_theta, best_margin, best_y = a[i], t[i], mg[i], yy[i]
        width /= 8
    return XorResult(kind.value, float(point[0]), float(point[1]), float(point[2]),
                     _readout_threshold(best_y, best_theta), float(best_acc),
                     float(best_margin), [float(v) for v in best_y])


def _pick(acc, margin):
    top = acc == acc.max()
    return int(np.argmax(np.where(top, margin, -np.inf)))


REPORT_COLUMNS = ["Architecture", "Convolutional Layer", "Activation Dense Layer",
                  "Validation Accuracy", "Test Accuracy", "Val Loss", "Loss"]


def report_rows(records):
    rows = []
    for r in records:
        cfg, last = r.config, r.final
        if isinstance(last, dict):
            last = EpochMetrics(**last)
        rows.append([
            "AlexNet",
            Activation.parse(cfg["conv_activation"]).label,
            Activation.parse(cfg["dense_activation"]).label,
            f"{last.val_accuracy:.4f}",
            f"{r.test_accuracy:.4f}",
            f"{last.val_loss:.4f}",
            f"{last.train_loss:.4f}",
        ])
    return rows


def emit_report(records, format="markdown"):
    """Render records as a table with the seven comparison columns."""
    records = list(records)
    if not records:
        raise ValueError("no records to report")
    rows = report_rows(records)
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)  # quotes as needed, CRLF line endings
        writer.writerow(REPORT_COLUMNS)
        writer.writerows(rows)
        return buf.getvalue()
    if format != "markdown":
        raise ValueError(f"unknown report format {format!r}")
    lines = ["| " + " | ".join(REPORT_COLUMNS) + " |",
             "|" + "|".join("---" for _ in REPORT_COLUMNS) + "|"]
    lines += ["| " + " | ".join(row) + " |" for row in rows]
    return "\n".join(lines) + "\n"


def save_parameters(model, path):
    np.savez(path, **model.parameters)


def load_parameters(model, path):
    with np.load(path) as f:
        for name, value in model.parameters.items():
            if f[name].shape != value.shape:
                raise ValueError(f"{name}: saved shape {f[name].shape} vs {value.shape}")
            value[...] = f[name]
    return model
