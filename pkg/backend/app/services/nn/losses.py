"""Softmax cross-entropy and binary logistic losses with soft labels."""

import logging
from typing import Tuple

import numpy as np

from app.errors import ShapeError

logger = logging.getLogger(__name__)


def _check_pair(logits: np.ndarray, labels: np.ndarray) -> None:
    if logits.ndim != 2 or labels.shape != logits.shape:
        raise ShapeError(f"logits {logits.shape} and labels {labels.shape} must be matching (batch, classes) arrays")
    if logits.shape[0] == 0:
        raise ShapeError("empty batch")


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def sigmoid(q: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * q))


def softplus(q: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, q)


def cross_entropy_terms(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-example -sum_c y_c log softmax(logits)_c."""
    _check_pair(logits, labels)
    return -(labels * log_softmax(logits)).sum(axis=1)


def loss_ce(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the logits.

    Args:
        logits: (batch, classes)
        labels: soft labels, same shape

    Returns:
        (loss, dloss_dlogits) with gradient (softmax - labels) / batch
    """
    terms = cross_entropy_terms(logits, labels)
    check_soft_labels(labels)
    n = logits.shape[0]
    return float(terms.mean()), (softmax(logits) - labels) / n


def logistic_terms(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-example log(1 + e^q) - y q for a single logit column."""
    _check_pair(logits, labels)
    if logits.shape[1] != 1:
        raise ShapeError("logistic loss needs a single logit column")
    return (softplus(logits) - labels * logits)[:, 0]


def loss_logistic(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    terms = logistic_terms(logits, labels)
    n = logits.shape[0]
    return float(terms.mean()), (sigmoid(logits) - labels) / n


def model_loss_terms(class_count: int, logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-example loss for a model with `class_count` outputs."""
    if class_count == 1:
        return logistic_terms(logits, labels)
    return cross_entropy_terms(logits, labels)


def model_loss(class_count: int, logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Cross-entropy for multiclass models, logistic loss for single-logit ones."""
    if class_count == 1:
        return loss_logistic(logits, labels)
    return loss_ce(logits, labels)


def encode_labels(y: np.ndarray, class_count: int) -> np.ndarray:
    """Class ids -> one-hot rows; for single-logit models, 0/1 ids -> a float column."""
    y = np.asarray(y)
    if class_count == 1:
        return y.astype(np.float64).reshape(-1, 1)
    if y.ndim != 1:
        raise ShapeError(f"expected a vector of class ids, got shape {y.shape}")
    if y.size and (y.min() < 0 or y.max() >= class_count):
        raise ShapeError(f"class ids must lie in [0, {class_count})")
    onehot = np.zeros((y.shape[0], class_count))
    onehot[np.arange(y.shape[0]), y.astype(np.int64)] = 1.0
    return onehot


def check_soft_labels(labels: np.ndarray, atol: float = 1e-9) -> None:
    """Entries in [0, 1] and rows summing to one (multiclass only)."""
    if np.any(labels < -atol) or np.any(labels > 1.0 + atol):
        raise ValueError("soft labels must lie in [0, 1]")
    if labels.shape[1] > 1 and not np.allclose(labels.sum(axis=1), 1.0, rtol=0.0, atol=atol):
        raise ValueError("soft label rows must sum to 1")
