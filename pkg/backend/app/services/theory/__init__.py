"""Numerical checks of the adversarial-mixup regularization expansion."""

from .checks import (
    McEstimate,
    DecompositionReport,
    RegularizationReport,
    SignCheckResult,
    LowerBoundResult,
    perturb,
    scores,
    adv_mixup_loss_mc,
    lemma1_decomposition,
    theorem5_terms,
    prop1_check,
    theorem1_check,
    adversarial_gap,
    taylor_quadrature,
)
from .suite import TheoryConfig, synthetic_instance, verify_theory

__all__ = [
    'McEstimate', 'DecompositionReport', 'RegularizationReport', 'SignCheckResult', 'LowerBoundResult',
    'perturb', 'scores', 'adv_mixup_loss_mc', 'lemma1_decomposition', 'theorem5_terms',
    'prop1_check', 'theorem1_check', 'adversarial_gap', 'taylor_quadrature',
    'TheoryConfig', 'synthetic_instance', 'verify_theory',
]
