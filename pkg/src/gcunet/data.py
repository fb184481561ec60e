"""MNIST (IDX) and CIFAR-10 (binary) loaders, splitting, and batching.

Pixels are scaled by 1/255 and nothing else.  The encoders invert the
loaders exactly, which the round-trip tests rely on and which the test
fixtures use to write synthetic dataset files.
"""
import gzip
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import BadMagic, CountMismatch, DataMissing, LabelOutOfRange, TruncatedFile

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 1 + 3 * 32 * 32

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}
CIFAR_TRAIN_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR_TEST_FILE = "test_batch.bin"


@dataclass
class Dataset:
    images: np.ndarray
    labels: np.ndarray
    name: str
    num_classes: int = 10

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise CountMismatch(f"{len(self.images)} images vs {len(self.labels)} labels")

    def __len__(self):
        return len(self.labels)

    def subset(self, indices, name=None):
        indices = np.asarray(indices)
        return Dataset(self.images[indices], self.labels[indices], name or self.name, self.num_classes)

    def validate(self):
        if self.images.size and (self.images.min() < 0 or self.images.max() > 1):
            raise ValueError(f"{self.name}: pixel values outside [0, 1]")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise LabelOutOfRange(f"{self.name}: labels outside [0, {self.num_classes})")
        return self


@dataclass(frozen=True)
class SplitSpec:
    val_fraction: float = 0.1
    seed: int = 0


def _read_bytes(path):
    path = Path(path)
    if not path.exists():
        gz = path.with_name(path.name + ".gz")
        if gz.exists():
            path = gz
        else:
            raise DataMissing(f"missing data file {path}")
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _find(directory, stem):
    # the canonical distribution names files with a dash; some mirrors use a dot
    directory = Path(directory)
    for name in (stem, stem.replace("-idx", ".idx")):
        for cand in (directory / name, directory / (name + ".gz")):
            if cand.exists():
                return cand
    raise DataMissing(f"missing data file {directory / stem}[.gz]")


def parse_idx(raw, expect_magic, what="IDX file"):
    """Decode an IDX byte string into a uint8 array."""
    if len(raw) < 4:
        raise TruncatedFile(f"{what}: header truncated")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expect_magic:
        raise BadMagic(f"{what}: magic 0x{magic:08X}, expected 0x{expect_magic:08X}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise TruncatedFile(f"{what}: header truncated")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(dims, dtype=np.int64))
    if len(raw) - header < count:
        raise TruncatedFile(f"{what}: expected {count} data bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=header).reshape(dims)


def encode_idx(array):
    array = np.asarray(array, dtype=np.uint8)
    magic = 0x00000800 | array.ndim
    return struct.pack(f">I{array.ndim}I", magic, *array.shape) + array.tobytes()


def to_bytes(images):
    """Invert the 1/255 scaling."""
    return np.rint(np.asarray(images, dtype=np.float64) * 255).astype(np.uint8)


def _scale(pixels, dtype=None):
    return (pixels.astype(dtype or T.default_dtype()) / 255).astype(dtype or T.default_dtype())


def mnist_from_bytes(image_raw, label_raw, name="mnist", limit=None):
    images = parse_idx(image_raw, IDX_IMAGES_MAGIC, f"{name} images")
    labels = parse_idx(label_raw, IDX_LABELS_MAGIC, f"{name} labels")
    if images.ndim != 3:
        raise BadMagic(f"{name} images: expected 3 dimensions, got {images.ndim}")
    if len(images) != len(labels):
        raise CountMismatch(f"{name}: {len(images)} images vs {len(labels)} labels")
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    if labels.size and labels.max() > 9:
        raise LabelOutOfRange(f"{name}: label {labels.max()} > 9")
    ds = Dataset(_scale(images[:, None]), labels.astype(np.int64), name)
    return ds.validate()


def load_mnist(directory, limit=None):
    """Load ``(train, test)`` from the four IDX files in ``directory`` (gzip allowed)."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataMissing(f"MNIST directory {directory} does not exist")
    files = {k: _find(directory, v) for k, v in MNIST_FILES.items()}
    train = mnist_from_bytes(_read_bytes(files["train_images"]), _read_bytes(files["train_labels"]),
                             "mnist-train", limit)
    test = mnist_from_bytes(_read_bytes(files["test_images"]), _read_bytes(files["test_labels"]),
                            "mnist-test", limit)
    return train, test


def encode_mnist(dataset):
    """``(image_bytes, label_bytes)`` in IDX form."""
    return encode_idx(to_bytes(dataset.images[:, 0])), encode_idx(dataset.labels.astype(np.uint8))


def cifar_from_bytes(raw, name="cifar10", limit=None):
    if len(raw) % CIFAR_RECORD:
        raise TruncatedFile(f"{name}: {len(raw)} bytes is not a multiple of {CIFAR_RECORD}")
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    if limit is not None:
        records = records[:limit]
    labels = records[:, 0].astype(np.int64)
    if labels.size and labels.max() > 9:
        raise LabelOutOfRange(f"{name}: label {labels.max()} > 9")
    images = records[:, 1:].reshape(-1, 3, 32, 32)
    return Dataset(_scale(images), labels, name).validate()


def encode_cifar(dataset):
    pix = to_bytes(dataset.images).reshape(len(dataset), -1)
    return np.concatenate([dataset.labels.astype(np.uint8)[:, None], pix], axis=1).tobytes()


def _cifar_dir(directory):
    directory = Path(directory)
    nested = directory / "cifar-10-batches-bin"
    if not (directory / CIFAR_TEST_FILE).exists() and nested.is_dir():
        return nested
    return directory


def load_cifar10(directory, limit=None):
    """Load ``(train, test)`` from ``data_batch_1..5.bin`` and ``test_batch.bin``."""
    directory = _cifar_dir(directory)
    if not directory.is_dir():
        raise DataMissing(f"CIFAR-10 directory {directory} does not exist")
    parts = []
    for fname in CIFAR_TRAIN_FILES:
        if limit is not None and sum(len(p) for p in parts) >= limit:
            break
        parts.append(cifar_from_bytes(_read_bytes(directory / fname), f"cifar10/{fname}"))
    train = Dataset(np.concatenate([p.images for p in parts]),
                    np.concatenate([p.labels for p in parts]), "cifar10-train")
    if limit is not None:
        train = train.subset(np.arange(min(limit, len(train))))
    test = cifar_from_bytes(_read_bytes(directory / CIFAR_TEST_FILE), "cifar10-test", limit)
    return train, test


def split(dataset, spec):
    """Seeded shuffle, then the last ceil(N * val_fraction) indices go to validation."""
    if not 0 < spec.val_fraction < 1:
        raise ValueError("val_fraction must lie in (0, 1)")
    n = len(dataset)
    perm = T.make_rng(spec.seed).permutation(n)
    n_val = math.ceil(n * spec.val_fraction)
    train_idx, val_idx = perm[:n - n_val], perm[n - n_val:]
    return (dataset.subset(train_idx, dataset.name + "-train"),
            dataset.subset(val_idx, dataset.name + "-val"))


def batches(dataset, batch_size, shuffle_seed=None):
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    n = len(dataset)
    order = np.arange(n) if shuffle_seed is None else T.make_rng(shuffle_seed).permutation(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        yield dataset.images[idx], dataset.labels[idx]


def xor_dataset(dtype=None):
    x = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=dtype or T.default_dtype())
    return Dataset(x, np.array([0, 1, 1, 0]), "xor", num_classes=2)


def default_data_dir(dataset):
    """``$MNIST_DIR`` / ``$CIFAR10_DIR`` or ``./data/<name>``."""
    env = {"mnist": "MNIST_DIR", "cifar10": "CIFAR10_DIR"}[dataset]
    return Path(os.environ.get(env, Path("data") / dataset))
