"""Dataset ingestion."""

from .splits import Split, Dataset
from .idx import IMAGES_MAGIC, LABELS_MAGIC, load_idx, parse_idx
from .datasets import MNIST_FILES, load_mnist, mnist_available, synth_blobs

__all__ = [
    'Split', 'Dataset', 'IMAGES_MAGIC', 'LABELS_MAGIC', 'load_idx', 'parse_idx',
    'MNIST_FILES', 'load_mnist', 'mnist_available', 'synth_blobs',
]
