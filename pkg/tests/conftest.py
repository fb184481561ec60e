import gzip
import struct

import numpy as np
import pytest

from gcunet.tensor import precision


@pytest.fixture
def f64():
    with precision(np.float64):
        yield


def idx_bytes(array):
    # written independently of gcunet.data so loader tests do not check themselves
    array = np.asarray(array, dtype=np.uint8)
    header = struct.pack(">BBBB", 0, 0, 0x08, array.ndim)
    header += b"".join(struct.pack(">I", d) for d in array.shape)
    return header + array.tobytes()


def synthetic_digits(n, seed, size=28, channels=1):
    """Byte images whose class is a bright 6x6 square at one of ten positions, plus noise."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, n).astype(np.uint8)
    images = rng.integers(0, 60, (n, channels, size, size)).astype(np.int64)
    step = (size - 6) // 4
    for i, c in enumerate(labels):
        r, col = divmod(int(c), 4)
        images[i, :, 2 + r * step:8 + r * step, 2 + col * step:8 + col * step] += 180
    return np.clip(images, 0, 255).astype(np.uint8), labels


def write_mnist(directory, n_train=600, n_test=200, seed=0, gz=False):
    directory.mkdir(parents=True, exist_ok=True)
    tr_x, tr_y = synthetic_digits(n_train, seed)
    te_x, te_y = synthetic_digits(n_test, seed + 1)
    files = {
        "train-images-idx3-ubyte": idx_bytes(tr_x[:, 0]),
        "train-labels-idx1-ubyte": idx_bytes(tr_y),
        "t10k-images-idx3-ubyte": idx_bytes(te_x[:, 0]),
        "t10k-labels-idx1-ubyte": idx_bytes(te_y),
    }
    for name, raw in files.items():
        if gz:
            (directory / (name + ".gz")).write_bytes(gzip.compress(raw))
        else:
            (directory / name).write_bytes(raw)
    return directory


def write_cifar(directory, per_batch=40, seed=0):
    directory.mkdir(parents=True, exist_ok=True)
    names = [f"data_batch_{i}.bin" for i in range(1, 6)] + ["test_batch.bin"]
    for k, name in enumerate(names):
        x, y = synthetic_digits(per_batch, seed + k, size=32, channels=3)
        records = np.concatenate([y[:, None], x.reshape(per_batch, -1)], axis=1)
        (directory / name).write_bytes(records.astype(np.uint8).tobytes())
    return directory


@pytest.fixture
def mnist_dir(tmp_path):
    return write_mnist(tmp_path / "mnist")


@pytest.fixture
def cifar_dir(tmp_path):
    return write_cifar(tmp_path / "cifar")
