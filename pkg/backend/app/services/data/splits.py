"""Split and Dataset containers."""

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(eq=False)
class Split:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if self.x.ndim != 2 or self.y.shape != (self.x.shape[0],):
            raise ValueError(f"split needs (n, d) inputs and n labels, got {self.x.shape} and {self.y.shape}")

    def __len__(self) -> int:
        return self.x.shape[0]

    def head(self, limit: Optional[int]) -> "Split":
        if limit is None or limit >= len(self):
            return self
        return Split(self.x[:limit], self.y[:limit])


@dataclass(eq=False)
class Dataset:
    name: str
    train: Split
    test: Split
    class_count: int

    def __post_init__(self):
        for label, split in (("train", self.train), ("test", self.test)):
            if len(split) == 0:
                raise ValueError(f"{self.name}: empty {label} split")
            if split.y.min() < 0 or split.y.max() >= self.class_count:
                raise ValueError(f"{self.name}: {label} labels outside [0, {self.class_count})")
            if split.x.min() < 0.0 or split.x.max() > 1.0:
                raise ValueError(f"{self.name}: {label} inputs outside [0, 1]")
        if self.train.x.shape[1] != self.test.x.shape[1]:
            raise ValueError(f"{self.name}: train and test input dims differ")

    @property
    def input_dim(self) -> int:
        return self.train.x.shape[1]

