"""Representation and weight diagnostics."""

from .representations import (
    RepMatrix,
    ClassSpectrum,
    SpectrumReport,
    LayerNorm,
    ProbeConfig,
    ProbeResult,
    collect_representations,
    singular_values,
    soft_rank,
    spectrum,
    spectral_norm,
    weight_norms,
    random_label_probe,
    probe_model,
)

__all__ = [
    'RepMatrix', 'ClassSpectrum', 'SpectrumReport', 'LayerNorm', 'ProbeConfig', 'ProbeResult',
    'collect_representations', 'singular_values', 'soft_rank', 'spectrum', 'spectral_norm',
    'weight_norms', 'random_label_probe', 'probe_model',
]
