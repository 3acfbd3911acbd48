"""L-infinity FGSM and PGD attacks."""

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from app.errors import AttackError, ShapeError
from app.services.nn import Model, backward, forward, model_loss

logger = logging.getLogger(__name__)

BALL_TOLERANCE = 1e-12


@dataclass(frozen=True)
class AttackConfig:
    """Radius, step and iteration count of an L-infinity attack."""

    epsilon: float
    step_size: float
    iterations: int = 1
    random_start: bool = False
    bounds: Tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if not self.epsilon >= 0 or math.isinf(self.epsilon):
            raise ValueError(f"epsilon must be finite and >= 0, got {self.epsilon}")
        if not self.step_size > 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        lo, hi = self.bounds
        if not lo < hi:
            raise ValueError(f"bounds must satisfy lo < hi, got {self.bounds}")

    @classmethod
    def fgsm(cls, epsilon: float, bounds: Tuple[float, float] = (0.0, 1.0)) -> "AttackConfig":
        return cls(epsilon, epsilon if epsilon > 0 else 1.0, 1, False, bounds)

    @classmethod
    def pgd(cls, epsilon: float, step_size: float, iterations: int, random_start: bool = False,
            bounds: Tuple[float, float] = (0.0, 1.0)) -> "AttackConfig":
        return cls(epsilon, step_size, iterations, random_start, bounds)

    @property
    def is_fgsm_equivalent(self) -> bool:
        single = self.iterations == 1 and not self.random_start
        return single and (self.step_size == self.epsilon or self.epsilon == 0)

    @property
    def kind(self) -> str:
        return "fgsm" if self.is_fgsm_equivalent else "pgd"

    def describe(self) -> str:
        return "fgsm" if self.is_fgsm_equivalent else f"pgd{self.iterations}"

    def with_epsilon(self, epsilon: float) -> "AttackConfig":
        return replace(self, epsilon=epsilon)

    def with_iterations(self, iterations: int) -> "AttackConfig":
        return replace(self, iterations=iterations)


def input_gradient(model: Model, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of the mean loss w.r.t. the inputs, model untouched."""
    logits, tape = forward(model, x)
    _, dlogits = model_loss(model.class_count, logits, y)
    _, dx = backward(model, tape, dlogits, param_grads=False)
    return dx


def project_linf(candidate: np.ndarray, origin: np.ndarray, epsilon: float,
                 bounds: Tuple[float, float]) -> np.ndarray:
    """Clamp into the epsilon box around origin, then into the data bounds."""
    if candidate.shape != origin.shape:
        raise ShapeError(f"candidate {candidate.shape} and origin {origin.shape} differ")
    inside = np.clip(candidate, origin - epsilon, origin + epsilon)
    return np.clip(inside, bounds[0], bounds[1])


def _check_ball(x_adv: np.ndarray, x: np.ndarray, cfg: AttackConfig) -> None:
    if not np.all(np.isfinite(x_adv)):
        raise AttackError("attack produced non-finite inputs")
    if x_adv.size == 0:
        return
    radius = float(np.max(np.abs(x_adv - x)))
    lo, hi = cfg.bounds
    if radius > cfg.epsilon + BALL_TOLERANCE or x_adv.min() < lo or x_adv.max() > hi:
        raise AttackError(f"adversarial batch left the ball: radius {radius:.3e} > epsilon {cfg.epsilon}")


def fgsm(model: Model, x: np.ndarray, y: np.ndarray, cfg: AttackConfig) -> np.ndarray:
    """x + epsilon * sgn(grad), clamped to the bounds; sgn(0) = 0."""
    x = np.asarray(x, dtype=np.float64)
    if cfg.epsilon == 0:
        return x.copy()
    grad = input_gradient(model, x, y)
    x_adv = np.clip(x + cfg.epsilon * np.sign(grad), cfg.bounds[0], cfg.bounds[1])
    _check_ball(x_adv, x, cfg)
    return x_adv


def pgd(model: Model, x: np.ndarray, y: np.ndarray, cfg: AttackConfig,
        rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Iterated signed steps, each followed by projection onto the ball and bounds.

    Args:
        model: attacked model (not modified)
        x: clean inputs
        y: true labels, encoded for the model
        cfg: attack hyperparameters
        rng: generator for the random start; required only when cfg.random_start

    Returns:
        Adversarial inputs within epsilon of x
    """
    x = np.asarray(x, dtype=np.float64)
    if cfg.epsilon == 0:
        return x.copy()
    x_adv = x.copy()
    if cfg.random_start:
        if rng is None:
            raise ValueError("random_start needs an rng")
        x_adv = project_linf(x + rng.uniform(-cfg.epsilon, cfg.epsilon, size=x.shape), x, cfg.epsilon, cfg.bounds)
    for _ in range(cfg.iterations):
        grad = input_gradient(model, x_adv, y)
        x_adv = project_linf(x_adv + cfg.step_size * np.sign(grad), x, cfg.epsilon, cfg.bounds)
    _check_ball(x_adv, x, cfg)
    return x_adv


def generate(model: Model, x: np.ndarray, y: np.ndarray, cfg: AttackConfig,
             rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """FGSM for FGSM-equivalent configs, PGD otherwise."""
    if cfg.is_fgsm_equivalent:
        return fgsm(model, x, y, cfg)
    return pgd(model, x, y, cfg, rng)
