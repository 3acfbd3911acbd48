"""Dense models made of affine and ReLU layers."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from app.errors import ShapeError

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class Affine:
    """h -> h @ W.T + b with W of shape (out, in)."""

    W: np.ndarray
    b: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]

    def forward(self, h: np.ndarray) -> np.ndarray:
        return h @ self.W.T + self.b


@dataclass(eq=False)
class ReLU:
    def forward(self, h: np.ndarray) -> np.ndarray:
        return np.maximum(h, 0.0)


Layer = Union[Affine, ReLU]


@dataclass(eq=False)
class Model:
    """Ordered affine/ReLU stack plus metadata.

    Layer boundaries index the hidden states a mix can be injected into:
    boundary 0 is the input, boundary k the output of the k-th ReLU, and the
    last boundary is the logits.
    """

    layers: List[Layer]
    input_dim: int
    class_count: int
    seed: Optional[int] = None
    _positions: List[int] = field(init=False, repr=False)

    def __post_init__(self):
        affines = [layer for layer in self.layers if isinstance(layer, Affine)]
        if not affines:
            raise ShapeError("model needs at least one affine layer")
        if not isinstance(self.layers[-1], Affine):
            raise ShapeError("model must end with an affine layer")
        width = self.input_dim
        for k, layer in enumerate(self.layers):
            if isinstance(layer, Affine):
                if layer.in_dim != width:
                    raise ShapeError(f"layer {k} expects {layer.in_dim} inputs, previous layer gives {width}")
                if layer.b.shape != (layer.out_dim,):
                    raise ShapeError(f"layer {k} bias shape {layer.b.shape} does not match out dim {layer.out_dim}")
                width = layer.out_dim
        if width != self.class_count:
            raise ShapeError(f"final out dim {width} != class_count {self.class_count}")

        positions = [0]
        for k, layer in enumerate(self.layers):
            if isinstance(layer, ReLU):
                positions.append(k + 1)
        if positions[-1] != len(self.layers):
            positions.append(len(self.layers))
        self._positions = positions

    @classmethod
    def mlp(cls, input_dim: int, hidden: Sequence[int], class_count: int, seed: int) -> "Model":
        """He-uniform weights, zero biases."""
        rng = np.random.default_rng(seed)
        layers: List[Layer] = []
        widths = [input_dim, *hidden, class_count]
        for k, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            limit = np.sqrt(6.0 / fan_in)
            W = rng.uniform(-limit, limit, size=(fan_out, fan_in))
            layers.append(Affine(W, np.zeros(fan_out)))
            if k < len(widths) - 2:
                layers.append(ReLU())
        return cls(layers, input_dim, class_count, seed)

    @classmethod
    def linear(cls, w: Sequence[float], bias: float = 0.0) -> "Model":
        """Single-logit linear model f(x) = w.x + bias."""
        W = np.asarray(w, dtype=np.float64).reshape(1, -1)
        return cls([Affine(W, np.array([float(bias)]))], W.shape[1], 1)

    @property
    def affine_layers(self) -> List[Affine]:
        return [layer for layer in self.layers if isinstance(layer, Affine)]

    @property
    def boundary_positions(self) -> List[int]:
        """Layer-list position at which each boundary's hidden state enters."""
        return list(self._positions)

    @property
    def final_boundary(self) -> int:
        return len(self._positions) - 1

    @property
    def mixable_boundaries(self) -> range:
        return range(self.final_boundary)

    @property
    def is_linear(self) -> bool:
        return len(self.layers) == 1

    @property
    def shapes(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(p.shape for p in self.parameters())

    def parameters(self) -> List[np.ndarray]:
        """Live parameter arrays in the order W0, b0, W1, b1, ..."""
        params: List[np.ndarray] = []
        for layer in self.affine_layers:
            params.extend([layer.W, layer.b])
        return params

    def describe(self) -> str:
        parts = []
        for layer in self.layers:
            parts.append(f"affine:{layer.in_dim}x{layer.out_dim}" if isinstance(layer, Affine) else "relu")
        return " ".join(parts)

    def copy(self) -> "Model":
        layers: List[Layer] = [
            Affine(layer.W.copy(), layer.b.copy()) if isinstance(layer, Affine) else ReLU()
            for layer in self.layers
        ]
        return Model(layers, self.input_dim, self.class_count, self.seed)
