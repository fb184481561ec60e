import numpy as np
import pytest

from gcunet import data as D
from gcunet.errors import BadMagic, CountMismatch, DataMissing, LabelOutOfRange, TruncatedFile
from conftest import idx_bytes, synthetic_digits, write_cifar, write_mnist


def test_idx_header_parse():
    raw = bytes.fromhex("00000803 0000EA60 0000001C 0000001C")
    arr = D.parse_idx(raw + bytes(60000 * 28 * 28), D.IDX_IMAGES_MAGIC)
    assert arr.shape == (60000, 28, 28)


def test_idx_wrong_magic():
    with pytest.raises(BadMagic):
        D.parse_idx(idx_bytes(np.zeros((2, 2, 2))), D.IDX_LABELS_MAGIC)


def test_idx_truncated():
    raw = idx_bytes(np.zeros((3, 4, 4)))
    with pytest.raises(TruncatedFile):
        D.parse_idx(raw[:-1], D.IDX_IMAGES_MAGIC)
    with pytest.raises(TruncatedFile):
        D.parse_idx(raw[:10], D.IDX_IMAGES_MAGIC)


def test_pixel_scaling():
    img = np.zeros((2, 28, 28), dtype=np.uint8)
    img[0, 0, 0] = 255
    ds = D.mnist_from_bytes(idx_bytes(img), idx_bytes(np.array([3, 4])))
    assert ds.images.shape == (2, 1, 28, 28)
    assert ds.images[0, 0, 0, 0] == 1.0 and ds.images[0, 0, 0, 1] == 0.0
    assert ds.labels.tolist() == [3, 4]


def test_count_mismatch():
    with pytest.raises(CountMismatch):
        D.mnist_from_bytes(idx_bytes(np.zeros((2, 28, 28))), idx_bytes(np.array([1])))


@pytest.mark.parametrize("gz", [False, True])
def test_load_mnist_directory(tmp_path, gz):
    write_mnist(tmp_path, n_train=50, n_test=20, gz=gz)
    train, test = D.load_mnist(tmp_path)
    x, y = synthetic_digits(50, 0)
    assert train.images.shape == (50, 1, 28, 28) and len(test) == 20
    assert np.array_equal(D.to_bytes(train.images), x)
    assert np.array_equal(train.labels, y)


def test_load_mnist_missing(tmp_path):
    with pytest.raises(DataMissing):
        D.load_mnist(tmp_path / "nope")
    with pytest.raises(DataMissing):
        D.load_mnist(tmp_path)


def test_mnist_round_trip_is_bit_exact():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (30, 28, 28), dtype=np.uint8)
    lab = rng.integers(0, 10, 30, dtype=np.uint8)
    raw_i, raw_l = idx_bytes(img), idx_bytes(lab)
    ds = D.mnist_from_bytes(raw_i, raw_l)
    assert D.encode_mnist(ds) == (raw_i, raw_l)


def test_cifar_record_layout():
    rec = np.zeros((10, D.CIFAR_RECORD), dtype=np.uint8)
    rec[0, 0] = 7
    rec[0, 1:1025] = 255
    raw = rec.tobytes()
    assert len(raw) == 30730
    ds = D.cifar_from_bytes(raw)
    assert len(ds) == 10 and ds.labels[0] == 7
    assert np.all(ds.images[0, 0] == 1) and np.all(ds.images[0, 1:] == 0)


def test_cifar_errors():
    with pytest.raises(TruncatedFile):
        D.cifar_from_bytes(bytes(3072))
    bad = np.zeros(D.CIFAR_RECORD, dtype=np.uint8)
    bad[0] = 10
    with pytest.raises(LabelOutOfRange):
        D.cifar_from_bytes(bad.tobytes())


def test_cifar_round_trip_is_bit_exact():
    rng = np.random.default_rng(1)
    raw = np.concatenate([rng.integers(0, 10, (25, 1)), rng.integers(0, 256, (25, 3072))],
                         axis=1).astype(np.uint8).tobytes()
    assert D.encode_cifar(D.cifar_from_bytes(raw)) == raw


def test_load_cifar_directory(tmp_path):
    write_cifar(tmp_path / "cifar-10-batches-bin", per_batch=8)
    train, test = D.load_cifar10(tmp_path)
    assert train.images.shape == (40, 3, 32, 32)
    assert len(test) == 8
    assert train.images.dtype == np.float32
    assert 0 <= train.images.min() and train.images.max() <= 1


def test_split_partition():
    ds = D.Dataset(np.zeros((10, 1, 2, 2)), np.arange(10) % 10, "t")
    tr, va = D.split(ds, D.SplitSpec(0.2, 0))
    assert len(tr) == 8 and len(va) == 2
    assert sorted(tr.labels.tolist() + va.labels.tolist()) == list(range(10))
    tr2, va2 = D.split(ds, D.SplitSpec(0.2, 0))
    assert np.array_equal(tr.labels, tr2.labels) and np.array_equal(va.labels, va2.labels)


def test_split_rounds_validation_up():
    ds = D.Dataset(np.zeros((7, 1)), np.zeros(7, int), "t")
    assert len(D.split(ds, D.SplitSpec(0.1, 0))[1]) == 1


def test_split_seeds_differ():
    ds = D.Dataset(np.zeros((1000, 1)), np.arange(1000) % 10, "t")
    a = D.split(ds, D.SplitSpec(0.1, 1))[1]
    b = D.split(ds, D.SplitSpec(0.1, 2))[1]
    assert not np.array_equal(a.labels, b.labels)


def test_split_rejects_bad_fraction():
    ds = D.Dataset(np.zeros((4, 1)), np.zeros(4, int), "t")
    with pytest.raises(ValueError):
        D.split(ds, D.SplitSpec(1.0, 0))


def test_batches():
    ds = D.Dataset(np.arange(10.0)[:, None], np.arange(10), "t")
    sizes = [len(y) for _, y in D.batches(ds, 4)]
    assert sizes == [4, 4, 2]
    natural = np.concatenate([y for _, y in D.batches(ds, 4)])
    assert natural.tolist() == list(range(10))
    a = np.concatenate([y for _, y in D.batches(ds, 3, shuffle_seed=5)])
    b = np.concatenate([y for _, y in D.batches(ds, 3, shuffle_seed=5)])
    assert np.array_equal(a, b) and sorted(a.tolist()) == list(range(10))


def test_xor_dataset():
    ds = D.xor_dataset()
    assert len(ds) == 4
    table = {tuple(x): y for x, y in zip(ds.images.tolist(), ds.labels.tolist())}
    assert table == {(0, 0): 0, (0, 1): 1, (1, 0): 1, (1, 1): 0}
