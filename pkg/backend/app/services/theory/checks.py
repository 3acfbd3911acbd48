"""Numerical checks of the adversarial-mixup loss expansion for binary logistic models.

Every check works on perturbed points x_hat = x + delta computed once by an
attack. Expectations over r ~ x_hat are exact sums over the n perturbed points;
expectations over lambda use the closed-form moments of the mixture
(a/(a+b)) Beta(a+1, b) + (b/(a+b)) Beta(b+1, a). A `scale` s in [0, 1] maps
lambda to 1 - s(1 - lambda), shrinking the mixing strength for decay-order
experiments; s = 1 is the plain loss.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, List, NamedTuple, Optional, Tuple

import numpy as np

from app.errors import PreconditionError
from app.services.attacks import AttackConfig, generate
from app.services.mix import DTilde, sample_lambdas
from app.services.nn import (
    Model,
    backward,
    encode_labels,
    forward,
    forward_to,
    logistic_terms,
    model_loss_terms,
    sigmoid,
    softplus,
)

logger = logging.getLogger(__name__)

HOMOGENEITY_TOL = 1e-9
# max |h'''| for h(z) = log(1 + e^z)
H3_MAX = math.sqrt(3.0) / 18.0

LambdaSampler = Callable[[np.random.Generator, int], np.ndarray]


class McEstimate(NamedTuple):
    estimate: float
    std_error: float
    samples: int


def _require_binary(model: Model) -> None:
    if model.class_count != 1:
        raise PreconditionError(
            f"theory checks need a single-logit binary logistic model, got {model.class_count} outputs"
        )


def _labels(y: np.ndarray, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape != (n,):
        raise PreconditionError(f"expected {n} binary labels, got shape {y.shape}")
    if np.any((y != 0.0) & (y != 1.0)):
        raise PreconditionError("labels must be 0 or 1")
    return y


def perturb(model: Model, x: np.ndarray, y: np.ndarray, attack: AttackConfig,
            rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """x_hat = x + delta_hat from one run of the attack."""
    _require_binary(model)
    x = np.asarray(x, dtype=np.float64)
    y = _labels(y, x.shape[0])
    return generate(model, x, y.reshape(-1, 1), attack, rng)


def scores(model: Model, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Logits f(x_i) and per-example input gradients grad f(x_i)."""
    logits, tape = forward(model, x)
    _, grads = backward(model, tape, np.ones_like(logits), param_grads=False)
    return logits[:, 0], grads


def _check_homogeneous(f: np.ndarray, grads: np.ndarray, x_hat: np.ndarray) -> None:
    gap = np.abs(f - np.einsum("ij,ij->i", grads, x_hat))
    worst = float(gap.max()) if gap.size else 0.0
    if worst > HOMOGENEITY_TOL:
        k = int(np.argmax(gap))
        raise PreconditionError(
            f"model violates f(z) = grad f(z).z: |gap| = {worst:.3e} at example {k} (tolerance {HOMOGENEITY_TOL})"
        )


def _pair_draws(n: int, mc_samples: int, rng: np.random.Generator,
                exhaustive: bool = False) -> Tuple[np.ndarray, np.ndarray, int]:
    """Pair indices stratified by i; rows of width `width` share one i."""
    if exhaustive:
        per = max(1, mc_samples // (n * n))
        i = np.repeat(np.arange(n), n * per)
        j = np.tile(np.repeat(np.arange(n), per), n)
        return i, j, n * per
    per = max(1, mc_samples // n)
    return np.repeat(np.arange(n), per), rng.integers(0, n, size=n * per), per


def _stratified(values: np.ndarray, n: int) -> Tuple[float, float]:
    rows = values.reshape(n, -1)
    width = rows.shape[1]
    mean = float(rows.mean(axis=1).mean())
    if width < 2:
        return mean, 0.0
    var = rows.var(axis=1, ddof=1)
    return mean, float(np.sqrt(var.sum() / width) / n)


def adv_mixup_loss_mc(model: Model, x: np.ndarray, y: np.ndarray, alpha: float, beta: float,
                      attack: AttackConfig, mc_samples: int = 100_000,
                      rng: Optional[np.random.Generator] = None,
                      lambda_sampler: Optional[LambdaSampler] = None,
                      exhaustive: bool = False) -> McEstimate:
    """
    Monte-Carlo estimate of the adversarial-mixup loss with mixed labels.

    Args:
        model: single-logit logistic model
        x: (n, d) clean points, n >= 2
        y: n binary labels
        alpha: Beta shape
        beta: Beta shape
        attack: attack producing the perturbed points once
        mc_samples: total number of (pair, lambda) draws
        rng: generator for pairs and lambdas
        lambda_sampler: override for the lambda law, e.g. a point mass for tests
        exhaustive: enumerate every (i, j) pair instead of sampling j

    Returns:
        McEstimate(estimate, std_error, samples)
    """
    _require_binary(model)
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise ValueError("adversarial-mixup loss needs n >= 2")
    y = _labels(y, n)
    rng = rng if rng is not None else np.random.default_rng(0)
    x_hat = perturb(model, x, y, attack, rng)

    i, j, _ = _pair_draws(n, mc_samples, rng, exhaustive)
    if lambda_sampler is None:
        lam = sample_lambdas(alpha, beta, rng, i.shape[0])
    else:
        lam = np.asarray(lambda_sampler(rng, i.shape[0]), dtype=np.float64)
    mixed = lam[:, None] * x_hat[i] + (1.0 - lam)[:, None] * x_hat[j]
    y_mix = lam * y[i] + (1.0 - lam) * y[j]
    q = forward_to(model, mixed, model.final_boundary)
    losses = logistic_terms(q, y_mix.reshape(-1, 1))
    estimate, std_error = _stratified(losses, n)
    return McEstimate(estimate, std_error, int(i.shape[0]))


@dataclass
class _Expansion:
    """Terms of the second-order expansion around each perturbed point."""

    f: np.ndarray
    grads: np.ndarray
    g: np.ndarray
    h2: np.ndarray
    base_terms: np.ndarray
    # diffs[i, r] = grad f(x_hat_i) . (x_hat_r - x_hat_i)
    diffs: np.ndarray

    @property
    def base(self) -> float:
        return float(self.base_terms.mean())

    @property
    def first_order(self) -> np.ndarray:
        return self.diffs.mean(axis=1)

    @property
    def sigma_norm2(self) -> np.ndarray:
        return (self.diffs ** 2).mean(axis=1)


def _expansion(model: Model, x_hat: np.ndarray, y: np.ndarray) -> _Expansion:
    f, grads = scores(model, x_hat)
    g = sigmoid(f)
    proj = grads @ x_hat.T
    diffs = proj - np.diag(proj)[:, None]
    base_terms = softplus(f) - y * f
    return _Expansion(f, grads, g, g * (1.0 - g), base_terms, diffs)


class _Remainders(NamedTuple):
    la_direct: float
    la_std_error: float
    remainder: float
    remainder_std_error: float
    samples: int


def _dtilde_mc(model: Model, x_hat: np.ndarray, y: np.ndarray, exp: _Expansion, dtilde: DTilde,
               scale: float, mc_samples: int, rng: np.random.Generator) -> _Remainders:
    """Plain and Taylor-remainder estimates of the loss written over the lambda mixture."""
    n = x_hat.shape[0]
    i, j, _ = _pair_draws(n, mc_samples, rng)
    u = 1.0 - dtilde.sample(rng, i.shape[0], scale)
    mixed = x_hat[i] + u[:, None] * (x_hat[j] - x_hat[i])
    q = forward_to(model, mixed, model.final_boundary)[:, 0]
    losses = softplus(q) - y[i] * q
    step = u * exp.diffs[i, j]
    taylor = exp.base_terms[i] + (exp.g[i] - y[i]) * step + 0.5 * exp.h2[i] * step ** 2
    la, la_se = _stratified(losses, n)
    rem, rem_se = _stratified(losses - taylor, n)
    return _Remainders(la, la_se, rem, rem_se, int(i.shape[0]))


def _taylor_bound(exp: _Expansion, dtilde: DTilde, scale: float) -> float:
    """|E[h(f + t) - quadratic]| <= max|h'''| / 6 * E|t|^3 over pairs and lambda."""
    return H3_MAX / 6.0 * dtilde.moment_one_minus(3, scale) * float(np.mean(np.abs(exp.diffs) ** 3))


@dataclass
class DecompositionReport:
    base_loss: float
    G1: float
    G2: float
    G3: float
    La_direct: float
    residual: float
    mc_std_error: float
    remainder: float
    remainder_std_error: float
    taylor_bound: float
    scale: float
    samples: int
    mean_one_minus: float
    second_moment_one_minus: float

    @property
    def expansion(self) -> float:
        return self.base_loss + self.G1 + self.G2 + self.G3

    def to_record(self) -> dict:
        return asdict(self)


def _validate_scale(scale: float) -> None:
    if not 0.0 <= scale <= 1.0:
        raise ValueError(f"scale must lie in [0, 1], got {scale}")


def lemma1_decomposition(model: Model, x: np.ndarray, y: np.ndarray, alpha: float, beta: float,
                         attack: AttackConfig, mc_samples: int = 100_000,
                         rng: Optional[np.random.Generator] = None, scale: float = 1.0) -> DecompositionReport:
    """
    Split the adversarial-mixup loss into base, G1, G2, G3 and a remainder.

    Args:
        model: single-logit linear logistic model
        x: (n, d) clean points
        y: n binary labels
        alpha: Beta shape
        beta: Beta shape
        attack: attack producing the perturbed points
        mc_samples: draws for the direct estimate
        rng: generator
        scale: mixing-strength scale s

    Returns:
        DecompositionReport; `residual` compares the plain estimate with the
        expansion, `remainder` is the low-variance estimate of the same gap
    """
    _require_binary(model)
    if not model.is_linear:
        raise PreconditionError("the expansion needs a twice-differentiable model; ReLU networks are excluded")
    _validate_scale(scale)
    rng = rng if rng is not None else np.random.default_rng(0)
    x = np.asarray(x, dtype=np.float64)
    y = _labels(y, x.shape[0])
    x_hat = perturb(model, x, y, attack, rng)
    n = x_hat.shape[0]

    dtilde = DTilde(alpha, beta)
    m1 = dtilde.moment_one_minus(1, scale)
    m2 = dtilde.moment_one_minus(2, scale)
    exp = _expansion(model, x_hat, y)
    G1 = m1 / n * float(np.sum((exp.g - y) * exp.first_order))
    G2 = m2 / (2 * n) * float(np.sum(exp.h2 * exp.sigma_norm2))
    # linear model: zero Hessian
    G3 = 0.0

    mc = _dtilde_mc(model, x_hat, y, exp, dtilde, scale, mc_samples, rng)
    report = DecompositionReport(
        base_loss=exp.base,
        G1=G1,
        G2=G2,
        G3=G3,
        La_direct=mc.la_direct,
        residual=mc.la_direct - (exp.base + G1 + G2 + G3),
        mc_std_error=mc.la_std_error,
        remainder=mc.remainder,
        remainder_std_error=mc.remainder_std_error,
        taylor_bound=_taylor_bound(exp, dtilde, scale),
        scale=scale,
        samples=mc.samples,
        mean_one_minus=m1,
        second_moment_one_minus=m2,
    )
    logger.info(
        f"Loss decomposition (s={scale}): base={report.base_loss:.6f} G1={G1:.3e} G2={G2:.3e} "
        f"residual={report.residual:.3e} +/- {report.mc_std_error:.1e}"
    )
    return report


def taylor_quadrature(model: Model, x: np.ndarray, y: np.ndarray, alpha: float, beta: float,
                      attack: AttackConfig, nodes: int = 200, scale: float = 1.0) -> float:
    """
    Second-order Taylor value of the loss, integrated over every pair and over
    lambda by Gauss-Legendre quadrature of the mixture density.

    Only meant for n <= 4 and shapes >= 1 (bounded density).
    """
    _require_binary(model)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] > 4:
        raise ValueError("quadrature cross-check is limited to n <= 4")
    y = _labels(y, x.shape[0])
    x_hat = perturb(model, x, y, attack)
    exp = _expansion(model, x_hat, y)
    dtilde = DTilde(alpha, beta)

    t, weights = np.polynomial.legendre.leggauss(nodes)
    lam = 0.5 * (t + 1.0)
    weights = 0.5 * weights
    density = np.zeros_like(lam)
    for w, (a, b) in zip(dtilde.weights, dtilde.components):
        log_norm = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        density += w * np.exp(log_norm + (a - 1) * np.log(lam) + (b - 1) * np.log1p(-lam))
    u = scale * (1.0 - lam)

    total = 0.0
    n = x_hat.shape[0]
    for i in range(n):
        for j in range(n):
            step = u * exp.diffs[i, j]
            poly = exp.base_terms[i] + (exp.g[i] - y[i]) * step + 0.5 * exp.h2[i] * step ** 2
            total += float(np.sum(weights * density * poly))
    return total / (n * n)


def _cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    denom = na * nb
    dots = np.einsum("ij,ij->i", a, b)
    cos = np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0)
    return np.clip(cos, -1.0, 1.0)


def adversarial_gap(model: Model, x: np.ndarray, y: np.ndarray, attack: AttackConfig,
                    rng: Optional[np.random.Generator] = None) -> float:
    """
    Mean excess of the attacked loss over the clean loss.

    Args:
        model: any model; labels are class ids (or 0/1 for single-logit models)
        x: clean points
        y: labels
        attack: inner-max surrogate
        rng: generator for random starts

    Returns:
        Q_hat >= 0
    """
    x = np.asarray(x, dtype=np.float64)
    if attack.epsilon == 0:
        return 0.0
    labels = encode_labels(np.asarray(y), model.class_count)
    x_adv = generate(model, x, labels, attack, rng)
    clean = model_loss_terms(model.class_count, forward_to(model, x, model.final_boundary), labels)
    adv = model_loss_terms(model.class_count, forward_to(model, x_adv, model.final_boundary), labels)
    gap = float(np.mean(adv - clean))
    if gap < 0:
        logger.warning(f"Attack lowered the loss on average ({gap:.3e}); clamping the gap to 0")
        return 0.0
    return gap


@dataclass
class RegularizationReport:
    C1: float
    C2: float
    c1_terms: List[float]
    c2_terms: List[float]
    gradient_norms: List[float]
    sigma_gradient_norms: List[float]
    theta_prime_member: List[bool]
    zeta: List[float]
    epsilon_mix: List[float]
    R: List[float]
    c_x: float
    Q_hat: float
    base_loss: float
    expansion: float
    La_direct: float
    mc_std_error: float
    taylor_bound: float
    scale: float
    samples: int

    @property
    def c2_positive(self) -> bool:
        return self.C2 > 0

    @property
    def expansion_matches(self) -> bool:
        return abs(self.La_direct - self.expansion) <= 3.0 * self.mc_std_error + self.taylor_bound

    def to_record(self) -> dict:
        record = asdict(self)
        record.update(c2_positive=self.c2_positive, expansion_matches=self.expansion_matches)
        return record


class _Geometry(NamedTuple):
    exp: _Expansion
    x_hat: np.ndarray
    c1_terms: np.ndarray
    zeta: np.ndarray
    members: np.ndarray
    R: np.ndarray
    c_x: float
    eps_mix: np.ndarray


def _geometry(model: Model, x_hat: np.ndarray, y: np.ndarray, m1: float) -> _Geometry:
    exp = _expansion(model, x_hat, y)
    _check_homogeneous(exp.f, exp.grads, x_hat)
    n, d = x_hat.shape

    mean_r = x_hat.mean(axis=0)
    offsets = x_hat - mean_r
    cos_offset = _cosine(exp.grads, offsets)
    # y - g times the projection of x_hat_i - E[r] on grad f, per unit gradient norm
    c1_terms = m1 / n * (y - exp.g) * np.linalg.norm(offsets, axis=1) * cos_offset
    zeta = exp.grads @ mean_r
    margin = exp.f - zeta
    members = y * margin + (y - 1.0) * margin >= 0

    R = np.abs(_cosine(exp.grads, x_hat))
    c_x = float(np.min(np.linalg.norm(x_hat, axis=1)) / math.sqrt(d))
    eps_mix = R * c_x * m1 * math.sqrt(d)
    return _Geometry(exp, x_hat, c1_terms, zeta, members, R, c_x, eps_mix)


def theorem5_terms(model: Model, x: np.ndarray, y: np.ndarray, alpha: float, beta: float,
                   attack: AttackConfig, mc_samples: int = 100_000,
                   rng: Optional[np.random.Generator] = None, scale: float = 1.0) -> RegularizationReport:
    """
    Regularization coefficients C1, C2 and the gradient-norm terms they weight.

    Args:
        model: single-logit model with f(z) = grad f(z).z (linear or bias-free ReLU)
        x: (n, d) clean points
        y: n binary labels
        alpha: Beta shape
        beta: Beta shape
        attack: attack producing the perturbed points
        mc_samples: draws for the direct estimate used to verify the expansion
        rng: generator
        scale: mixing-strength scale s

    Returns:
        RegularizationReport
    """
    _validate_scale(scale)
    rng = rng if rng is not None else np.random.default_rng(0)
    x = np.asarray(x, dtype=np.float64)
    y = _labels(y, x.shape[0])
    dtilde = DTilde(alpha, beta)
    m1 = dtilde.moment_one_minus(1, scale)
    m2 = dtilde.moment_one_minus(2, scale)
    geo = _geometry(model, perturb(model, x, y, attack, rng), y, m1)
    exp = geo.exp
    n = x.shape[0]

    c2_terms = m2 / (2 * n) * np.abs(exp.h2)
    grad_norms = np.linalg.norm(exp.grads, axis=1)
    expansion = exp.base + float(np.sum(geo.c1_terms * grad_norms)) + float(np.sum(c2_terms * exp.sigma_norm2))
    mc = _dtilde_mc(model, geo.x_hat, y, exp, dtilde, scale, mc_samples, rng)

    report = RegularizationReport(
        C1=float(np.sum(geo.c1_terms)),
        C2=float(np.sum(c2_terms)),
        c1_terms=geo.c1_terms.tolist(),
        c2_terms=c2_terms.tolist(),
        gradient_norms=grad_norms.tolist(),
        sigma_gradient_norms=exp.sigma_norm2.tolist(),
        theta_prime_member=[bool(m) for m in geo.members],
        zeta=geo.zeta.tolist(),
        epsilon_mix=geo.eps_mix.tolist(),
        R=geo.R.tolist(),
        c_x=geo.c_x,
        Q_hat=adversarial_gap(model, x, y, attack, rng),
        base_loss=exp.base,
        expansion=expansion,
        La_direct=mc.la_direct,
        mc_std_error=mc.la_std_error,
        taylor_bound=_taylor_bound(exp, dtilde, scale),
        scale=scale,
        samples=mc.samples,
    )
    if not report.c2_positive:
        logger.warning(f"C2 = {report.C2} is not positive; logits saturated")
    return report


@dataclass
class SignCheckResult:
    members: List[bool]
    zeta: List[float]
    C1: float
    verdict: str

    def to_record(self) -> dict:
        return asdict(self)


def prop1_check(model: Model, x: np.ndarray, y: np.ndarray, attack: AttackConfig,
                alpha: float = 1.0, beta: float = 1.0) -> SignCheckResult:
    """Margin condition per example and, when every example meets it, the sign of C1."""
    x = np.asarray(x, dtype=np.float64)
    y = _labels(y, x.shape[0])
    m1 = DTilde(alpha, beta).moment_one_minus(1)
    geo = _geometry(model, perturb(model, x, y, attack), y, m1)
    C1 = float(np.sum(geo.c1_terms))
    if not np.all(geo.members):
        verdict = "precondition_unmet"
    else:
        verdict = "c1_nonnegative" if C1 >= -1e-12 else "c1_negative"
    return SignCheckResult([bool(m) for m in geo.members], geo.zeta.tolist(), C1, verdict)


@dataclass
class LowerBoundResult:
    verdict: str
    lhs: Optional[float] = None
    lhs_std_error: Optional[float] = None
    rhs: Optional[float] = None
    gap: Optional[float] = None
    tolerance: Optional[float] = None
    epsilon_mix: List[float] = field(default_factory=list)
    R: List[float] = field(default_factory=list)
    c_x: Optional[float] = None
    scale: float = 1.0

    def to_record(self) -> dict:
        return asdict(self)


def theorem1_check(model: Model, x: np.ndarray, y: np.ndarray, alpha: float, beta: float,
                   attack: AttackConfig, mc_samples: int = 100_000,
                   rng: Optional[np.random.Generator] = None, scale: float = 1.0) -> LowerBoundResult:
    """
    Compare the adversarial-mixup loss with the worst-case L2 loss at radius eps_mix_i.

    Args:
        model: single-logit model with f(z) = grad f(z).z
        x: (n, d) points whose perturbed versions must be centered
        y: n binary labels
        alpha: Beta shape
        beta: Beta shape
        attack: attack producing the perturbed points
        mc_samples: draws for the left-hand side
        rng: generator
        scale: mixing-strength scale s

    Returns:
        LowerBoundResult with verdict "holds", "violated" or "precondition_unmet"
    """
    _validate_scale(scale)
    rng = rng if rng is not None else np.random.default_rng(0)
    x = np.asarray(x, dtype=np.float64)
    y = _labels(y, x.shape[0])
    x_hat = perturb(model, x, y, attack, rng)
    centre = np.abs(x_hat.mean(axis=0)).max()
    if centre > 1e-9 * max(1.0, float(np.abs(x_hat).max())):
        raise PreconditionError(f"perturbed data must be centered; |mean| = {centre:.3e}")

    dtilde = DTilde(alpha, beta)
    m1 = dtilde.moment_one_minus(1, scale)
    geo = _geometry(model, x_hat, y, m1)
    exp = geo.exp
    sign = 2.0 * y - 1.0
    if np.any(sign * exp.f < 0):
        logger.info("Some perturbed points are misclassified; no verdict")
        return LowerBoundResult("precondition_unmet", epsilon_mix=geo.eps_mix.tolist(), R=geo.R.tolist(),
                              c_x=geo.c_x, scale=scale)

    n = x.shape[0]
    m2 = dtilde.moment_one_minus(2, scale)
    G1 = m1 / n * float(np.sum((exp.g - y) * exp.first_order))
    G2 = m2 / (2 * n) * float(np.sum(exp.h2 * exp.sigma_norm2))
    mc = _dtilde_mc(model, geo.x_hat, y, exp, dtilde, scale, mc_samples, rng)
    lhs = exp.base + G1 + G2 + mc.remainder

    # worst L2 perturbation of a locally linear score moves f against the label
    worst = exp.f - sign * geo.eps_mix * np.linalg.norm(exp.grads, axis=1)
    rhs = float(np.mean(softplus(worst) - y * worst))
    gap = lhs - rhs
    tolerance = 10.0 * m1 ** 3
    verdict = "holds" if gap >= -(tolerance + 3.0 * mc.remainder_std_error) else "violated"
    return LowerBoundResult(verdict, lhs, mc.remainder_std_error, rhs, gap, tolerance,
                          geo.eps_mix.tolist(), geo.R.tolist(), geo.c_x, scale)
