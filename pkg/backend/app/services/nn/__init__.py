"""Dense network engine: models, passes, losses and SGD."""

from .model import Affine, ReLU, Model
from .engine import Injection, GradTape, forward, forward_to, backward, predict
from .losses import (
    loss_ce,
    loss_logistic,
    model_loss,
    model_loss_terms,
    cross_entropy_terms,
    logistic_terms,
    encode_labels,
    check_soft_labels,
    sigmoid,
    softplus,
)
from .optim import SGD, SGDState, sgd_step

__all__ = [
    'Affine', 'ReLU', 'Model',
    'Injection', 'GradTape', 'forward', 'forward_to', 'backward', 'predict',
    'loss_ce', 'loss_logistic', 'model_loss', 'model_loss_terms', 'cross_entropy_terms',
    'logistic_terms', 'encode_labels', 'check_soft_labels', 'sigmoid', 'softplus',
    'SGD', 'SGDState', 'sgd_step',
]
