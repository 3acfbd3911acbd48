import gzip
import struct

import numpy as np
import pytest

from app.errors import IdxFormatError
from app.services.data import (
    IMAGES_MAGIC,
    LABELS_MAGIC,
    Dataset,
    Split,
    load_idx,
    load_mnist,
    mnist_available,
    parse_idx,
    synth_blobs,
)


def _idx(magic: int, dims, payload: bytes) -> bytes:
    return struct.pack(">I", magic) + struct.pack(f">{len(dims)}I", *dims) + payload


def _write_pair(directory, stem_images, stem_labels, n=3, rows=2, cols=2, gz=False):
    pixels = bytes(range(n * rows * cols))
    labels = bytes(k % 10 for k in range(n))
    images_blob = _idx(IMAGES_MAGIC, (n, rows, cols), pixels)
    labels_blob = _idx(LABELS_MAGIC, (n,), labels)
    suffix = ".gz" if gz else ""
    opener = gzip.open if gz else open
    with opener(directory / f"{stem_images}{suffix}", "wb") as f:
        f.write(images_blob)
    with opener(directory / f"{stem_labels}{suffix}", "wb") as f:
        f.write(labels_blob)
    return directory / f"{stem_images}{suffix}", directory / f"{stem_labels}{suffix}"


class TestParseIdx:
    def test_header_and_payload(self):
        dims, values = parse_idx(_idx(IMAGES_MAGIC, (2, 1, 3), bytes([0, 1, 2, 253, 254, 255])), IMAGES_MAGIC)
        assert dims == (2, 1, 3)
        np.testing.assert_array_equal(values, [0, 1, 2, 253, 254, 255])

    def test_wrong_magic(self):
        with pytest.raises(IdxFormatError):
            parse_idx(_idx(LABELS_MAGIC, (2,), b"\x00\x01"), IMAGES_MAGIC)

    def test_truncated_payload(self):
        with pytest.raises(IdxFormatError):
            parse_idx(_idx(LABELS_MAGIC, (5,), b"\x00\x01"), LABELS_MAGIC)

    def test_truncated_header(self):
        with pytest.raises(IdxFormatError):
            parse_idx(struct.pack(">I", IMAGES_MAGIC) + b"\x00\x00", IMAGES_MAGIC)

    def test_trailing_bytes_ignored(self):
        dims, values = parse_idx(_idx(LABELS_MAGIC, (2,), b"\x03\x04\x05"), LABELS_MAGIC)
        assert dims == (2,)
        np.testing.assert_array_equal(values, [3, 4])


class TestLoadIdx:
    @pytest.mark.parametrize("gz", [False, True])
    def test_scaled_rows(self, tmp_path, gz):
        images, labels = _write_pair(tmp_path, "img", "lbl", gz=gz)
        split = load_idx(images, labels)
        assert split.x.shape == (3, 4)
        assert split.x[0, 1] == pytest.approx(1.0 / 255.0)
        np.testing.assert_array_equal(split.y, [0, 1, 2])

    def test_count_mismatch(self, tmp_path):
        (tmp_path / "img").write_bytes(_idx(IMAGES_MAGIC, (2, 1, 1), b"\x00\x01"))
        (tmp_path / "lbl").write_bytes(_idx(LABELS_MAGIC, (3,), b"\x00\x01\x02"))
        with pytest.raises(IdxFormatError):
            load_idx(tmp_path / "img", tmp_path / "lbl")

    def test_mnist_directory(self, tmp_path):
        assert not mnist_available(tmp_path)
        _write_pair(tmp_path, "train-images-idx3-ubyte", "train-labels-idx1-ubyte", n=4)
        _write_pair(tmp_path, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", n=3, gz=True)
        assert mnist_available(tmp_path)
        dataset = load_mnist(tmp_path, train_limit=2)
        assert len(dataset.train) == 2 and len(dataset.test) == 3
        assert dataset.class_count == 10


class TestSynthBlobs:
    def test_shapes_and_range(self, blobs):
        assert blobs.input_dim == 6
        assert len(blobs.train) == 120 and len(blobs.test) == 60
        assert blobs.train.x.min() >= 0.0 and blobs.train.x.max() <= 1.0

    def test_deterministic(self):
        a = synth_blobs(3, 10, 4, 5.0, seed=9)
        b = synth_blobs(3, 10, 4, 5.0, seed=9)
        np.testing.assert_array_equal(a.train.x, b.train.x)
        np.testing.assert_array_equal(a.test.y, b.test.y)

    def test_nearest_center_separates_well_separated_blobs(self, blobs):
        centers = np.stack([blobs.train.x[blobs.train.y == c].mean(axis=0) for c in range(3)])
        dist = ((blobs.test.x[:, None, :] - centers[None]) ** 2).sum(axis=2)
        assert np.mean(dist.argmin(axis=1) == blobs.test.y) > 0.95

    @pytest.mark.parametrize("kwargs", [dict(separation=0.0), dict(classes=1), dict(per_class=0)])
    def test_invalid(self, kwargs):
        options = dict(classes=3, per_class=5, dim=2, separation=3.0, seed=0)
        options.update(kwargs)
        with pytest.raises(ValueError):
            synth_blobs(**options)


class TestDatasetValidation:
    def test_labels_out_of_range(self):
        split = Split(np.zeros((2, 2)), np.array([0, 3]))
        with pytest.raises(ValueError):
            Dataset("bad", split, split, 3)

    def test_inputs_outside_unit_box(self):
        split = Split(np.full((2, 2), 1.5), np.array([0, 1]))
        with pytest.raises(ValueError):
            Dataset("bad", split, split, 2)

    def test_split_shapes(self):
        with pytest.raises(ValueError):
            Split(np.zeros((3, 2)), np.zeros(2, dtype=np.int64))


class TestLoadDataset:
    FASHION = "[experiment]\nstages = train\n[data]\nsource = fashion_mnist\n"

    def _mnist(self, directory, n):
        directory.mkdir(exist_ok=True)
        _write_pair(directory, "train-images-idx3-ubyte", "train-labels-idx1-ubyte", n=n)
        _write_pair(directory, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", n=n)

    def test_fashion_needs_its_own_directory(self, tmp_path):
        from app.agent import load_dataset
        from app.config import parse_config

        self._mnist(tmp_path, 2)
        with pytest.raises(FileNotFoundError, match="fashion"):
            load_dataset(parse_config(self.FASHION), tmp_path)

    def test_fashion_reads_the_subdirectory(self, tmp_path):
        from app.agent import load_dataset
        from app.config import parse_config

        self._mnist(tmp_path, 2)
        self._mnist(tmp_path / "fashion", 5)
        dataset = load_dataset(parse_config(self.FASHION), tmp_path)
        assert dataset.name == "fashion_mnist"
        assert len(dataset.train) == 5
