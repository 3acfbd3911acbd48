"""Forward and reverse passes with an optional mix injected at a layer boundary."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from app.errors import NonFiniteError, ShapeError
from app.services.nn.model import Affine, Model

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Injection:
    """Replace the hidden state h at `layer_index` by lam*h + (1-lam)*h[permutation]."""

    layer_index: int
    lam: float
    permutation: np.ndarray


@dataclass(eq=False)
class GradTape:
    """Layer inputs cached by one forward pass; backward pops each exactly once."""

    model_id: int
    shapes: Tuple[Tuple[int, ...], ...]
    inputs: List[np.ndarray] = field(default_factory=list)
    injection: Optional[Injection] = None
    consumed: bool = False


def _check_batch(model: Model, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ShapeError(f"expected a (batch, {model.input_dim}) input, got {x.shape}")
    return x


def _check_injection(model: Model, injection: Injection, batch: int) -> None:
    if injection.layer_index not in model.mixable_boundaries:
        raise ShapeError(
            f"cannot mix at boundary {injection.layer_index}; model has boundaries {list(model.mixable_boundaries)}"
        )
    if not 0.0 <= injection.lam <= 1.0:
        raise ValueError(f"lambda {injection.lam} outside [0, 1]")
    perm = np.asarray(injection.permutation)
    if perm.shape != (batch,) or not np.array_equal(np.sort(perm), np.arange(batch)):
        raise ShapeError("injection permutation must be a bijection on the batch indices")


def _mix(h: np.ndarray, injection: Injection) -> np.ndarray:
    lam = injection.lam
    return lam * h + (1.0 - lam) * h[injection.permutation]


def forward(model: Model, x: np.ndarray, injection: Optional[Injection] = None) -> Tuple[np.ndarray, GradTape]:
    """
    Run the model and record a tape for `backward`.

    Args:
        model: network to evaluate
        x: (batch, input_dim) inputs
        injection: optional mix applied at a layer boundary

    Returns:
        (logits, tape)
    """
    x = _check_batch(model, x)
    if injection is not None:
        _check_injection(model, injection, x.shape[0])
        mix_at = model.boundary_positions[injection.layer_index]
    else:
        mix_at = -1

    tape = GradTape(model_id=id(model), shapes=model.shapes, injection=injection)
    h = x
    for pos, layer in enumerate(model.layers):
        if pos == mix_at:
            h = _mix(h, injection)
        tape.inputs.append(h)
        h = layer.forward(h)

    if not np.all(np.isfinite(h)):
        raise NonFiniteError("forward pass produced non-finite logits")
    return h, tape


def forward_to(model: Model, x: np.ndarray, boundary: int) -> np.ndarray:
    """Hidden state at `boundary` (the final boundary gives the logits)."""
    x = _check_batch(model, x)
    if not 0 <= boundary <= model.final_boundary:
        raise ShapeError(f"boundary {boundary} outside [0, {model.final_boundary}]")
    stop = model.boundary_positions[boundary]
    h = x
    for layer in model.layers[:stop]:
        h = layer.forward(h)
    return h


def predict(model: Model, x: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Argmax class ids; ties go to the lowest index. Single-logit models threshold at 0."""
    x = _check_batch(model, x)
    out = []
    for start in range(0, x.shape[0], chunk):
        logits = forward_to(model, x[start:start + chunk], model.final_boundary)
        if model.class_count == 1:
            out.append((logits[:, 0] > 0).astype(np.int64))
        else:
            out.append(np.argmax(logits, axis=1))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def backward(model: Model, tape: GradTape, dloss_dlogits: np.ndarray,
             param_grads: bool = True) -> Tuple[List[np.ndarray], np.ndarray]:
    """
    Reverse pass over a tape.

    Args:
        model: the model the tape was recorded on
        tape: tape from `forward`
        dloss_dlogits: upstream gradient, shaped like the logits
        param_grads: skip the weight gradients when only the input gradient is needed

    Returns:
        (grads aligned with model.parameters(), gradient w.r.t. the input)
    """
    if tape.model_id != id(model) or tape.shapes != model.shapes:
        raise ShapeError("tape was recorded on a different model")
    if tape.consumed:
        raise ValueError("tape already consumed by a previous backward pass")
    tape.consumed = True

    g = np.asarray(dloss_dlogits, dtype=np.float64)
    mix_at = model.boundary_positions[tape.injection.layer_index] if tape.injection is not None else -1
    grads: List[np.ndarray] = []
    for pos in range(len(model.layers) - 1, -1, -1):
        h = tape.inputs.pop()
        layer = model.layers[pos]
        if isinstance(layer, Affine):
            if param_grads:
                grads.append(g.sum(axis=0))
                grads.append(g.T @ h)
            g = g @ layer.W
        else:
            g = g * (h > 0)
        if pos == mix_at:
            g = _unmix(g, tape.injection)

    grads.reverse()
    for grad in grads:
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError("backward pass produced non-finite parameter gradients")
    if not np.all(np.isfinite(g)):
        raise NonFiniteError("backward pass produced a non-finite input gradient")
    return grads, g


def _unmix(g: np.ndarray, injection: Injection) -> np.ndarray:
    """Adjoint of `_mix`: both the lam branch and the permuted (1-lam) branch."""
    scattered = np.empty_like(g)
    scattered[injection.permutation] = g
    return injection.lam * g + (1.0 - injection.lam) * scattered
