"""Datasets: MNIST-style IDX corpora and synthetic Gaussian blobs."""

import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np

from app.services.data.idx import load_idx
from app.services.data.splits import Dataset, Split

logger = logging.getLogger(__name__)

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def _find(data_dir: Path, stem: str) -> Path:
    for candidate in (data_dir / stem, data_dir / f"{stem}.gz"):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"{stem}[.gz] not found in {data_dir}")


def mnist_available(data_dir: Union[str, Path]) -> bool:
    data_dir = Path(data_dir)
    try:
        for images, labels in MNIST_FILES.values():
            _find(data_dir, images)
            _find(data_dir, labels)
    except FileNotFoundError:
        return False
    return True


def load_mnist(data_dir: Union[str, Path], name: str = "mnist", train_limit: Optional[int] = None,
               test_limit: Optional[int] = None) -> Dataset:
    """
    Load MNIST or Fashion-MNIST from a directory of IDX files.

    Args:
        data_dir: directory holding the four standard files, gzipped or not
        name: dataset label recorded in reports
        train_limit: keep the first N training examples
        test_limit: keep the first N test examples

    Returns:
        Dataset with 10 classes and 784-dimensional inputs in [0, 1]
    """
    data_dir = Path(data_dir)
    splits = {}
    for split, (images, labels) in MNIST_FILES.items():
        splits[split] = load_idx(_find(data_dir, images), _find(data_dir, labels))
    dataset = Dataset(name, splits["train"].head(train_limit), splits["test"].head(test_limit), 10)
    logger.info(f"Dataset {name}: {len(dataset.train)} train / {len(dataset.test)} test examples")
    return dataset


def synth_blobs(classes: int, per_class: int, dim: int, separation: float, seed: int,
                test_per_class: Optional[int] = None) -> Dataset:
    """
    Unit-variance Gaussian clusters around centers drawn with the given spread, min-max scaled into [0, 1].

    Args:
        classes: number of clusters
        per_class: training points per cluster
        dim: input dimension
        separation: standard deviation of the cluster centers
        seed: generator seed
        test_per_class: test points per cluster (defaults to per_class)

    Returns:
        Dataset named "synth"
    """
    if separation <= 0:
        raise ValueError(f"separation must be > 0, got {separation}")
    if classes < 2:
        raise ValueError("need at least two classes")
    test_per_class = per_class if test_per_class is None else test_per_class
    if per_class <= 0 or test_per_class <= 0:
        raise ValueError("empty split: per_class and test_per_class must be positive")

    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, separation, size=(classes, dim))

    def draw(count: int):
        y = np.repeat(np.arange(classes), count)
        x = centers[y] + rng.normal(0.0, 1.0, size=(classes * count, dim))
        order = rng.permutation(classes * count)
        return x[order], y[order]

    x_train, y_train = draw(per_class)
    x_test, y_test = draw(test_per_class)
    lo = min(x_train.min(), x_test.min())
    hi = max(x_train.max(), x_test.max())

    def scale(v: np.ndarray) -> np.ndarray:
        return np.clip((v - lo) / (hi - lo), 0.0, 1.0)

    return Dataset("synth", Split(scale(x_train), y_train), Split(scale(x_test), y_test), classes)
