"""Per-class representation spectra, weight norms and the random-label probe."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from app.services.nn import SGD, Model, backward, encode_labels, forward, forward_to, model_loss, predict

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class RepMatrix:
    class_id: int
    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise ValueError("representation matrix needs at least one row")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("representation matrix has non-finite entries")


@dataclass
class ClassSpectrum:
    class_id: int
    sigmas: List[float]
    soft_rank: Optional[float]


@dataclass
class SpectrumReport:
    model_id: str
    layer_index: int
    classes: List[ClassSpectrum] = field(default_factory=list)

    def soft_ranks(self) -> dict:
        return {c.class_id: c.soft_rank for c in self.classes}


def collect_representations(model: Model, x: np.ndarray, labels: np.ndarray, layer_index: int,
                            class_count: int, chunk: int = 2048) -> List[RepMatrix]:
    """Hidden states at `layer_index`, grouped by true class; empty classes are skipped."""
    parts = [forward_to(model, x[s:s + chunk], layer_index) for s in range(0, x.shape[0], chunk)]
    reps = np.concatenate(parts) if parts else np.zeros((0, 0))
    out = []
    for c in range(class_count):
        rows = reps[labels == c]
        if rows.shape[0] == 0:
            logger.warning(f"Class {c} has no examples; omitted from the spectrum")
            continue
        out.append(RepMatrix(c, rows))
    return out


def singular_values(m: RepMatrix) -> np.ndarray:
    return np.linalg.svd(m.values, compute_uv=False)


def soft_rank(m: RepMatrix) -> float:
    """Sum of singular values over the largest one."""
    sigmas = singular_values(m)
    if sigmas.size == 0 or sigmas[0] == 0.0:
        raise ValueError(f"soft rank undefined for the all-zero matrix of class {m.class_id}")
    return float(sigmas.sum() / sigmas[0])


def spectrum(reps: List[RepMatrix], model_id: str, layer_index: int) -> SpectrumReport:
    report = SpectrumReport(model_id, layer_index)
    for m in reps:
        sigmas = singular_values(m)
        rank = float(sigmas.sum() / sigmas[0]) if sigmas[0] > 0 else None
        if rank is None:
            logger.warning(f"{model_id}: class {m.class_id} representations are all zero; soft rank undefined")
        report.classes.append(ClassSpectrum(m.class_id, [float(s) for s in sigmas], rank))
    return report


def spectral_norm(W: np.ndarray, tol: float = 1e-8, max_iter: int = 100_000, seed: int = 0) -> float:
    """
    Largest singular value by power iteration on W^T W.

    Stops once the residual ||W^T W v - s^2 v|| falls below tol * s^2.
    """
    W = np.asarray(W, dtype=np.float64)
    if not np.any(W):
        return 0.0
    v = np.random.default_rng(seed).normal(size=W.shape[1])
    v /= np.linalg.norm(v)
    value = 0.0
    for _ in range(max_iter):
        u = W @ v
        w = W.T @ u
        value = float(v @ w)
        residual = np.linalg.norm(w - value * v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        if residual <= tol * value:
            break
    else:
        logger.warning(f"Power iteration hit {max_iter} iterations without converging")
    return float(np.linalg.norm(W @ v))


@dataclass
class LayerNorm:
    layer: int
    frobenius: float
    spectral: float


def weight_norms(model: Model) -> List[LayerNorm]:
    """Frobenius and spectral norm of every affine weight matrix."""
    return [
        LayerNorm(k, float(np.linalg.norm(layer.W)), spectral_norm(layer.W))
        for k, layer in enumerate(model.affine_layers)
    ]


@dataclass(frozen=True)
class ProbeConfig:
    examples: int = 5000
    hidden: int = 128
    epochs: int = 200
    lr: float = 0.1
    momentum: float = 0.9
    batch_size: int = 64
    label_seed: int = 1234
    seed: int = 0


@dataclass
class ProbeResult:
    accuracy_pct: float
    examples: int
    label_fraction: float


def random_label_probe(features: np.ndarray, cfg: ProbeConfig = ProbeConfig()) -> ProbeResult:
    """
    Fit fixed random binary labels with a fresh 2-layer MLP on frozen features.

    Args:
        features: (n, k) representations; copied, never modified
        cfg: probe settings

    Returns:
        Final training accuracy
    """
    feats = np.array(features[:cfg.examples], dtype=np.float64)
    n = feats.shape[0]
    if n == 0:
        raise ValueError("probe needs at least one example")
    peak = np.max(np.abs(feats))
    if peak > 0:
        feats /= peak
    labels = np.random.default_rng(cfg.label_seed).integers(0, 2, size=n)
    y = encode_labels(labels, 2)
    probe = Model.mlp(feats.shape[1], (cfg.hidden,), 2, seed=cfg.seed)
    optimizer = SGD(probe, cfg.lr, cfg.momentum)
    rng = np.random.default_rng([cfg.seed, 1])
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            logits, tape = forward(probe, feats[idx])
            _, dlogits = model_loss(2, logits, y[idx])
            grads, _ = backward(probe, tape, dlogits)
            optimizer.step(grads)
    accuracy = 100.0 * float(np.mean(predict(probe, feats) == labels))
    return ProbeResult(accuracy, n, float(labels.mean()))


def probe_model(model: Model, x: np.ndarray, layer_index: int, cfg: ProbeConfig = ProbeConfig()) -> ProbeResult:
    """Probe the representations of `model` at a boundary; the model is only read."""
    features = forward_to(model, x[:cfg.examples], layer_index)
    return random_label_probe(features, cfg)
