"""Mixup and manifold mixup machinery."""

from .interpolation import (
    MixPolicy,
    MixDraw,
    DTilde,
    LossResult,
    sample_lambda,
    sample_lambdas,
    make_draw,
    mix_labels,
    mixed_loss,
    dtilde_params,
)

__all__ = [
    'MixPolicy', 'MixDraw', 'DTilde', 'LossResult', 'sample_lambda', 'sample_lambdas',
    'make_draw', 'mix_labels', 'mixed_loss', 'dtilde_params',
]
