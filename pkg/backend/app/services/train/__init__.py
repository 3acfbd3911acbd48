"""Training methods."""

from .loops import (
    METHODS,
    LRSchedule,
    TrainConfig,
    EpochRecord,
    TrainHistory,
    StepLosses,
    lr_at,
    iat_update,
    train,
)

__all__ = [
    'METHODS', 'LRSchedule', 'TrainConfig', 'EpochRecord', 'TrainHistory', 'StepLosses',
    'lr_at', 'iat_update', 'train',
]
