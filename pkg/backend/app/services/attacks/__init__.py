"""L-infinity adversarial example generation."""

from .linf import AttackConfig, input_gradient, project_linf, fgsm, pgd, generate

__all__ = ['AttackConfig', 'input_gradient', 'project_linf', 'fgsm', 'pgd', 'generate']
