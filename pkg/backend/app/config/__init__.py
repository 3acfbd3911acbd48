"""Configuration module."""

from pathlib import Path
import logging
from typing import List

from app.errors import ConfigError
from .experiment import (
    ExperimentConfig,
    STAGES,
    parse_attack_name,
    parse_config,
    load_config,
)

logger = logging.getLogger(__name__)

RECIPE_DIR = Path(__file__).parent / 'recipes'
# table-numbered names of the desk recipes
RECIPE_ALIASES = {'table1-desk': 'compression-desk', 'table2-desk': 'tradeoff-desk'}


def list_recipes() -> List[str]:
    """Names of the built-in recipes."""
    return sorted(p.stem for p in RECIPE_DIR.glob('*.ini'))


def recipe_path(name: str) -> Path:
    name = RECIPE_ALIASES.get(name, name)
    path = RECIPE_DIR / f'{name}.ini'
    if not path.exists():
        raise ConfigError(f"unknown recipe {name!r}; available: {', '.join(list_recipes())}")
    return path


def load_recipe(name: str) -> ExperimentConfig:
    """Load a built-in recipe by name."""
    return load_config(recipe_path(name))


__all__ = [
    'ExperimentConfig', 'STAGES', 'parse_attack_name', 'parse_config', 'load_config',
    'RECIPE_DIR', 'RECIPE_ALIASES', 'list_recipes', 'recipe_path', 'load_recipe',
]
