"""IDX (MNIST-style) file parsing."""

import gzip
import logging
import struct
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from app.errors import IdxFormatError
from app.services.data.splits import Split

logger = logging.getLogger(__name__)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


def _read_bytes(path: Union[str, Path]) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        return f.read()


def parse_idx(raw: bytes, expected_magic: int, name: str = "<bytes>") -> Tuple[Tuple[int, ...], np.ndarray]:
    """Header dims and the unsigned-byte payload of one IDX blob."""
    if len(raw) < 4:
        raise IdxFormatError(f"{name}: file too short for a magic number")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise IdxFormatError(f"{name}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise IdxFormatError(f"{name}: truncated dimension header")
    dims = struct.unpack(f">{ndim}I", raw[4:header_end])
    count = int(np.prod(dims))
    payload = raw[header_end:]
    if len(payload) < count:
        raise IdxFormatError(f"{name}: truncated payload, expected {count} bytes, found {len(payload)}")
    if len(payload) > count:
        logger.warning(f"{name}: {len(payload) - count} trailing bytes ignored")
    return dims, np.frombuffer(payload, dtype=np.uint8, count=count)


def load_idx(images_path: Union[str, Path], labels_path: Union[str, Path]) -> Split:
    """
    Read an images/labels IDX pair.

    Args:
        images_path: idx3 file (optionally .gz)
        labels_path: idx1 file (optionally .gz)

    Returns:
        Split with one row per image scaled to [0, 1] and int64 labels
    """
    dims, pixels = parse_idx(_read_bytes(images_path), IMAGES_MAGIC, str(images_path))
    label_dims, labels = parse_idx(_read_bytes(labels_path), LABELS_MAGIC, str(labels_path))
    if label_dims[0] != dims[0]:
        raise IdxFormatError(f"{labels_path}: {label_dims[0]} labels for {dims[0]} images")
    x = pixels.reshape(dims[0], -1).astype(np.float64) / 255.0
    logger.info(f"Loaded {dims[0]} images of {x.shape[1]} values from {images_path}")
    return Split(x, labels.astype(np.int64))
