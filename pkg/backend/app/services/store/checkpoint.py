"""Versioned text checkpoints.

Grammar, one item per line:

    iat-lab checkpoint
    format 1
    input_dim <int>
    class_count <int>
    layers <affine|relu> ...
    seed <int|none>
    config <one-line JSON>
    param <name> <dim> [<dim>]
    <row-major values, space separated, 17 significant digits>
    ... one param/values pair per weight and bias, ordered W0 b0 W1 b1 ...
    end

Seventeen significant digits round-trip every binary64 value exactly.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from app.errors import CheckpointError, ShapeError
from app.services.nn import Affine, Model, ReLU

logger = logging.getLogger(__name__)

MAGIC = "iat-lab checkpoint"
FORMAT_VERSION = 1


def _format_values(values: np.ndarray) -> str:
    return " ".join(format(float(v), ".17g") for v in values.ravel())


def save_checkpoint(model: Model, config: Optional[Dict[str, Any]], path: Union[str, Path]) -> Path:
    """
    Write `model` with an echo of its training config.

    Args:
        model: model to persist
        config: JSON-serializable run config (may be None)
        path: destination file; parent directories are created

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    kinds = ["affine" if isinstance(layer, Affine) else "relu" for layer in model.layers]
    lines = [
        MAGIC,
        f"format {FORMAT_VERSION}",
        f"input_dim {model.input_dim}",
        f"class_count {model.class_count}",
        f"layers {' '.join(kinds)}",
        f"seed {'none' if model.seed is None else model.seed}",
        f"config {json.dumps(config or {}, sort_keys=True)}",
    ]
    for k, layer in enumerate(model.affine_layers):
        for name, array in (("W", layer.W), ("b", layer.b)):
            lines.append(f"param {name}{k} {' '.join(str(d) for d in array.shape)}")
            lines.append(_format_values(array))
    lines.append("end")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"Checkpoint saved to {path} ({model.describe()})")
    return path


def _field(lines: List[str], index: int, key: str) -> str:
    if index >= len(lines):
        raise CheckpointError(f"missing '{key}' line")
    head, _, rest = lines[index].partition(" ")
    if head != key:
        raise CheckpointError(f"line {index + 1}: expected '{key}', found {lines[index][:40]!r}")
    return rest


def _int(text: str, what: str) -> int:
    try:
        return int(text)
    except ValueError as e:
        raise CheckpointError(f"malformed {what}: {text!r}") from e


def _param(lines: List[str], index: int, expected: str) -> Tuple[np.ndarray, int]:
    header = _field(lines, index, "param").split()
    if not header or header[0] != expected:
        raise CheckpointError(f"line {index + 1}: expected parameter {expected}, found {header[:1]}")
    dims = tuple(_int(d, f"shape of {expected}") for d in header[1:])
    if not dims or any(d <= 0 for d in dims):
        raise CheckpointError(f"line {index + 1}: bad shape {dims} for {expected}")
    if index + 1 >= len(lines):
        raise CheckpointError(f"values of {expected} missing")
    tokens = lines[index + 1].split()
    if len(tokens) != int(np.prod(dims)):
        raise CheckpointError(f"{expected}: {len(tokens)} values for shape {dims}")
    try:
        values = np.array([float(t) for t in tokens], dtype=np.float64)
    except ValueError as e:
        raise CheckpointError(f"{expected}: malformed number: {e}") from e
    if not np.all(np.isfinite(values)):
        raise CheckpointError(f"{expected}: non-finite value")
    return values.reshape(dims), index + 2


def read_checkpoint(path: Union[str, Path]) -> Tuple[Model, Dict[str, Any]]:
    """Model and config echo; any error leaves nothing half-built."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if not lines or lines[0] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint")
    version = _int(_field(lines, 1, "format"), "format version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format {version} unsupported (expected {FORMAT_VERSION})")
    input_dim = _int(_field(lines, 2, "input_dim"), "input_dim")
    class_count = _int(_field(lines, 3, "class_count"), "class_count")
    kinds = _field(lines, 4, "layers").split()
    if any(kind not in ("affine", "relu") for kind in kinds):
        raise CheckpointError(f"{path}: unknown layer kind in {kinds}")
    seed_text = _field(lines, 5, "seed")
    seed = None if seed_text == "none" else _int(seed_text, "seed")
    try:
        config = json.loads(_field(lines, 6, "config") or "{}")
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{path}: config echo is not JSON: {e}") from e

    index = 7
    layers = []
    affine = 0
    for kind in kinds:
        if kind == "relu":
            layers.append(ReLU())
            continue
        W, index = _param(lines, index, f"W{affine}")
        b, index = _param(lines, index, f"b{affine}")
        if W.ndim != 2 or b.ndim != 1:
            raise CheckpointError(f"{path}: layer {affine} has shapes {W.shape}, {b.shape}")
        layers.append(Affine(W, b))
        affine += 1
    if index != len(lines) - 1 or lines[index] != "end":
        raise CheckpointError(f"{path}: trailing content or missing 'end' after parameters")
    try:
        model = Model(layers, input_dim, class_count, seed)
    except ShapeError as e:
        raise CheckpointError(f"{path}: inconsistent shapes: {e}") from e
    logger.info(f"Checkpoint loaded from {path} ({model.describe()})")
    return model, config


def load_checkpoint(path: Union[str, Path]) -> Model:
    return read_checkpoint(path)[0]
