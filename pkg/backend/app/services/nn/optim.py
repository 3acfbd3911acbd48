"""Classical-momentum SGD."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from app.errors import NonFiniteError, ShapeError
from app.services.nn.model import Model

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class SGDState:
    velocity: List[np.ndarray] = field(default_factory=list)


def sgd_step(model: Model, param_grads: Sequence[np.ndarray], lr: float, momentum: float,
             state: Optional[SGDState] = None) -> SGDState:
    """
    v <- momentum * v + g; theta <- theta - lr * v, in place on the model.

    Args:
        model: model whose parameters are updated
        param_grads: gradients aligned with model.parameters()
        lr: learning rate
        momentum: velocity decay
        state: velocity from the previous step, or None to start at zero

    Returns:
        Updated state
    """
    params = model.parameters()
    if len(param_grads) != len(params):
        raise ShapeError(f"got {len(param_grads)} gradients for {len(params)} parameters")
    for k, (p, g) in enumerate(zip(params, param_grads)):
        if p.shape != g.shape:
            raise ShapeError(f"gradient {k} has shape {g.shape}, parameter has {p.shape}")
        bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
        if bad:
            logger.error(f"Non-finite gradient for parameter {k} {p.shape}: {bad} bad entries")
            raise NonFiniteError(f"non-finite gradient for parameter {k}: {bad} of {g.size} entries")

    if state is None or not state.velocity:
        state = SGDState([np.zeros_like(p) for p in params])
    for p, g, v in zip(params, param_grads, state.velocity):
        v *= momentum
        v += g
        p -= lr * v
    return state


class SGD:
    """Holds the learning rate, momentum and velocity for one model."""

    def __init__(self, model: Model, lr: float, momentum: float):
        self.model = model
        self.lr = lr
        self.momentum = momentum
        self.state: Optional[SGDState] = None

    def step(self, param_grads: Sequence[np.ndarray]) -> None:
        self.state = sgd_step(self.model, param_grads, self.lr, self.momentum, self.state)
