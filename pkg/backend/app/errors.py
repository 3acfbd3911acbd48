"""Named errors raised across the lab."""

from typing import Any, Optional


class LabError(Exception):
    """Base class for every error the lab raises on purpose."""


class ShapeError(LabError, ValueError):
    """Array shapes or layer boundaries do not fit the model."""


class NonFiniteError(LabError, FloatingPointError):
    """A NaN or Inf showed up in activations, gradients or attack outputs."""


class DivergenceError(NonFiniteError):
    """Training blew up; `history` holds the epochs completed before the abort."""

    def __init__(self, message: str, history: Optional[Any] = None):
        super().__init__(message)
        self.history = history


class AttackError(LabError):
    """An emitted adversarial batch left the epsilon ball or the data bounds."""


class IdxFormatError(LabError, ValueError):
    """Malformed IDX file."""


class CheckpointError(LabError, ValueError):
    """Checkpoint text could not be turned back into a model."""


class ConfigError(LabError, ValueError):
    """Experiment configuration is invalid."""


class PreconditionError(LabError, ValueError):
    """A theory check was called outside the setting it is stated for."""
