"""Beta sampling, batch pairing, input and hidden-layer mixup, and the mixed loss."""

import logging
from dataclasses import dataclass
from typing import FrozenSet, NamedTuple, Optional, Tuple

import numpy as np

from app.services.nn import GradTape, Injection, Model, check_soft_labels, forward, model_loss

logger = logging.getLogger(__name__)

MIX_MODES = ("none", "input", "manifold")


@dataclass(frozen=True)
class MixPolicy:
    """Interpolation mode and the Beta(alpha, beta) law lambda is drawn from."""

    mode: str = "none"
    alpha: float = 1.0
    beta: float = 1.0
    eligible_layers: FrozenSet[int] = frozenset({0, 1, 2})

    def __post_init__(self):
        if self.mode not in MIX_MODES:
            raise ValueError(f"unknown mix mode {self.mode!r}; expected one of {MIX_MODES}")
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"Beta shapes must be positive, got alpha={self.alpha}, beta={self.beta}")
        if self.mode == "manifold" and not self.eligible_layers:
            raise ValueError("manifold mode needs at least one eligible layer")
        object.__setattr__(self, "eligible_layers", frozenset(int(k) for k in self.eligible_layers))


@dataclass(frozen=True, eq=False)
class MixDraw:
    lam: float
    permutation: np.ndarray
    layer_index: int = 0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda {self.lam} outside [0, 1]")
        n = len(self.permutation)
        if not np.array_equal(np.sort(self.permutation), np.arange(n)):
            raise ValueError("permutation must be a bijection on batch indices")

    @property
    def is_identity(self) -> bool:
        return self.lam == 1.0 and bool(np.all(self.permutation == np.arange(len(self.permutation))))

    def injection(self) -> Optional[Injection]:
        if self.is_identity:
            return None
        return Injection(self.layer_index, self.lam, self.permutation)


def sample_lambdas(alpha: float, beta: float, rng: np.random.Generator, size: int) -> np.ndarray:
    """Beta(alpha, beta) draws as G1 / (G1 + G2) from two Gamma draws."""
    if not (alpha > 0 and beta > 0):
        raise ValueError(f"Beta shapes must be positive, got alpha={alpha}, beta={beta}")
    g1 = rng.standard_gamma(alpha, size=size)
    g2 = rng.standard_gamma(beta, size=size)
    total = g1 + g2
    # both gammas can underflow to 0 for tiny shapes
    degenerate = total == 0
    lam = np.where(degenerate, 0.0, g1 / np.where(degenerate, 1.0, total))
    if np.any(degenerate):
        coin = rng.random(int(degenerate.sum())) < alpha / (alpha + beta)
        lam[degenerate] = coin.astype(np.float64)
    return lam


def sample_lambda(alpha: float, beta: float, rng: np.random.Generator) -> float:
    return float(sample_lambdas(alpha, beta, rng, 1)[0])


def make_draw(policy: MixPolicy, batch_size: int, rng: np.random.Generator) -> MixDraw:
    """
    One lambda for the whole batch, a fresh permutation, and the mixing boundary.

    Mode none consumes nothing from rng.
    """
    if batch_size < 2:
        raise ValueError(f"mixing needs a batch of at least 2, got {batch_size}")
    if policy.mode == "none":
        return MixDraw(1.0, np.arange(batch_size), 0)
    lam = sample_lambda(policy.alpha, policy.beta, rng)
    permutation = rng.permutation(batch_size)
    if policy.mode == "input":
        layer = 0
    else:
        layer = int(rng.choice(sorted(policy.eligible_layers)))
    return MixDraw(lam, permutation, layer)


class LossResult(NamedTuple):
    loss: float
    dlogits: np.ndarray
    tape: GradTape


def mix_labels(y: np.ndarray, draw: MixDraw) -> np.ndarray:
    mixed = draw.lam * y + (1.0 - draw.lam) * y[draw.permutation]
    check_soft_labels(mixed)
    return mixed


def mixed_loss(model: Model, x: np.ndarray, y: np.ndarray, draw: MixDraw) -> LossResult:
    """
    Forward with the draw injected and score against the mixed labels.

    By linearity of the loss in the label this equals
    lam * l(logits, y) + (1 - lam) * l(logits, y[perm]).
    """
    logits, tape = forward(model, x, draw.injection())
    loss, dlogits = model_loss(model.class_count, logits, mix_labels(y, draw))
    return LossResult(loss, dlogits, tape)


@dataclass(frozen=True)
class DTilde:
    """(a/(a+b)) Beta(a+1, b) + (b/(a+b)) Beta(b+1, a)."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"Beta shapes must be positive, got alpha={self.alpha}, beta={self.beta}")

    @property
    def components(self) -> Tuple[Tuple[float, float], Tuple[float, float]]:
        return (self.alpha + 1.0, self.beta), (self.beta + 1.0, self.alpha)

    @property
    def weights(self) -> Tuple[float, float]:
        total = self.alpha + self.beta
        return self.alpha / total, self.beta / total

    def moment_one_minus(self, k: int, scale: float = 1.0) -> float:
        """E[(scale * (1 - lam))^k] in closed form."""
        value = 0.0
        for weight, (a, b) in zip(self.weights, self.components):
            # 1 - lam ~ Beta(b, a)
            raw = 1.0
            for r in range(k):
                raw *= (b + r) / (a + b + r)
            value += weight * raw
        return scale ** k * value

    @property
    def mean(self) -> float:
        return 1.0 - self.moment_one_minus(1)

    def sample(self, rng: np.random.Generator, size: int, scale: float = 1.0) -> np.ndarray:
        """Draws of lam, pushed through lam -> 1 - scale * (1 - lam)."""
        (a0, b0), (a1, b1) = self.components
        first = rng.random(size) < self.weights[0]
        a = np.where(first, a0, a1)
        b = np.where(first, b0, b1)
        g1 = rng.standard_gamma(a)
        g2 = rng.standard_gamma(b)
        lam = g1 / (g1 + g2)
        return 1.0 - scale * (1.0 - lam)


def dtilde_params(alpha: float, beta: float) -> DTilde:
    return DTilde(alpha, beta)
