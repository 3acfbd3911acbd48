"""Experiment configuration: `key = value` text with section headers.

Every section maps onto a frozen dataclass. Unknown sections and keys are
errors, so a typo never silently falls back to a default. Lists are comma
separated; numbers may be written as fractions such as `2/255`.
"""

import configparser
import hashlib
import logging
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union, get_type_hints

from app.errors import ConfigError
from app.services.attacks import AttackConfig
from app.services.mix import MixPolicy
from app.services.train import METHODS, LRSchedule, TrainConfig

logger = logging.getLogger(__name__)

STAGES = ("train", "eval", "transfer", "sweep", "obfuscation", "analysis", "theory")
SOURCES = ("synthetic", "mnist", "fashion_mnist")


@dataclass(frozen=True)
class ExperimentSection:
    name: str = "experiment"
    methods: Tuple[str, ...] = ("baseline",)
    seeds: Tuple[int, ...] = (0,)
    stages: Tuple[str, ...] = ("train", "eval")
    jobs: int = 1

    def __post_init__(self):
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}; expected some of {METHODS}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods must not repeat")
        bad = [s for s in self.stages if s not in STAGES]
        if bad:
            raise ConfigError(f"unknown stages {bad}; expected some of {STAGES}")
        if "train" not in self.stages and set(self.stages) - {"theory"}:
            raise ConfigError("every stage except theory needs the train stage")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")


@dataclass(frozen=True)
class DataSection:
    source: str = "synthetic"
    train_limit: int = 0
    test_limit: int = 0
    classes: int = 3
    per_class: int = 100
    test_per_class: int = 50
    dim: int = 20
    separation: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ConfigError(f"unknown data source {self.source!r}; expected one of {SOURCES}")
        if self.source == "synthetic" and self.separation <= 0:
            raise ConfigError("separation must be > 0")


@dataclass(frozen=True)
class ModelSection:
    hidden: Tuple[int, ...] = (256, 256, 256)

    def __post_init__(self):
        if any(h <= 0 for h in self.hidden):
            raise ConfigError(f"hidden widths must be positive, got {self.hidden}")


@dataclass(frozen=True)
class TrainSection:
    epochs: int = 40
    batch_size: int = 64
    lr: float = 0.1
    lr_factor: float = 0.1
    lr_decay_epochs: Tuple[int, ...] = (20, 30)
    momentum: float = 0.9
    adv_only: bool = False


@dataclass(frozen=True)
class TrainAttackSection:
    epsilon: float = 0.1
    step_size: float = 0.025
    iterations: int = 7
    random_start: bool = False


@dataclass(frozen=True)
class MixSection:
    alpha: float = 1.0
    beta: float = 1.0
    layers: Tuple[int, ...] = (0, 1, 2)


@dataclass(frozen=True)
class EvalSection:
    epsilon: float = 0.1
    step_size: float = 0.025
    random_start: bool = False
    attacks: Tuple[str, ...] = ("clean", "fgsm", "pgd7", "pgd20")
    unbounded_epsilon: float = 1.0
    sweep_methods: Tuple[str, ...] = ()
    sweep_epsilons: Tuple[float, ...] = ()
    sweep_iterations: Tuple[int, ...] = ()
    sweep_step: float = 2 / 255

    def __post_init__(self):
        # PGD-7 also backs the transfer and obfuscation attacks
        iterations = [7]
        for name in self.attacks:
            parsed = parse_attack_name(name)
            if parsed is not None and parsed[0] == "pgd":
                iterations.append(parsed[1])
        short = min(iterations)
        if short * self.step_size < self.epsilon - 1e-12:
            raise ConfigError(
                f"eval step_size {self.step_size} cannot reach epsilon {self.epsilon} in {short} PGD steps; "
                f"use at least {self.epsilon / short:.6g}"
            )


@dataclass(frozen=True)
class AnalysisSection:
    layer: int = 1
    spectrum: bool = True
    norms: bool = True
    probe: bool = True
    probe_examples: int = 5000
    probe_hidden: int = 128
    probe_epochs: int = 200
    examples: int = 0


@dataclass(frozen=True)
class TheorySection:
    seed: int = 0
    n: int = 8
    d: int = 4
    alpha: float = 1.0
    beta: float = 1.0
    epsilon: float = 0.05
    mc_samples: int = 100_000
    scales: Tuple[float, ...] = (1.0, 0.5, 0.25, 0.125)
    prop1_instances: int = 10_000


SECTIONS = {
    "experiment": ExperimentSection,
    "data": DataSection,
    "model": ModelSection,
    "train": TrainSection,
    "train_attack": TrainAttackSection,
    "mix": MixSection,
    "eval": EvalSection,
    "analysis": AnalysisSection,
    "theory": TheorySection,
}


def parse_attack_name(name: str) -> Optional[Tuple[str, int]]:
    """'clean' -> None, 'fgsm' -> ('fgsm', 1), 'pgd20' -> ('pgd', 20)."""
    if name == "clean":
        return None
    if name == "fgsm":
        return "fgsm", 1
    if name.startswith("pgd") and name[3:].isdigit() and int(name[3:]) >= 1:
        return "pgd", int(name[3:])
    raise ConfigError(f"unknown attack {name!r}; use clean, fgsm or pgd<N>")


def _number(text: str, kind: type) -> Union[int, float]:
    try:
        if kind is int:
            return int(text)
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError) as e:
        raise ConfigError(f"expected {kind.__name__}, got {text!r}") from e


def _convert(text: str, hint: Any, key: str) -> Any:
    if hint is bool:
        lowered = text.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {text!r}")
    if hint in (int, float):
        try:
            return _number(text, hint)
        except ConfigError as e:
            raise ConfigError(f"{key}: {e}") from e
    if hint is str:
        return text.strip()
    # Tuple[X, ...]
    item = hint.__args__[0]
    parts = [p.strip() for p in text.split(",") if p.strip()]
    return tuple(_convert(p, item, key) for p in parts)


def _render(value: Any) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_render(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    train_attack: TrainAttackSection = field(default_factory=TrainAttackSection)
    mix: MixSection = field(default_factory=MixSection)
    eval: EvalSection = field(default_factory=EvalSection)
    analysis: AnalysisSection = field(default_factory=AnalysisSection)
    theory: TheorySection = field(default_factory=TheorySection)

    def canonical_text(self) -> str:
        """Every section and key, sorted, with normalized values."""
        lines = []
        for section in sorted(SECTIONS):
            lines.append(f"[{section}]")
            values = getattr(self, section)
            for f in sorted(fields(values), key=lambda f: f.name):
                lines.append(f"{f.name} = {_render(getattr(values, f.name))}")
        return "\n".join(lines) + "\n"

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode("utf-8")).hexdigest()

    def with_seeds(self, seeds: Tuple[int, ...]) -> "ExperimentConfig":
        return replace(self, experiment=replace(self.experiment, seeds=tuple(seeds)))

    def train_attack_config(self) -> AttackConfig:
        a = self.train_attack
        return AttackConfig.pgd(a.epsilon, a.step_size, a.iterations, a.random_start)

    def mix_policy(self, method: str) -> Optional[MixPolicy]:
        if method in ("mixup", "iat_mixup"):
            mode = "input"
        elif method in ("manifold_mixup", "iat_manifold"):
            mode = "manifold"
        else:
            return None
        return MixPolicy(mode, self.mix.alpha, self.mix.beta, frozenset(self.mix.layers))

    def train_config(self, method: str, seed: int) -> TrainConfig:
        t = self.train
        uses_attack = method == "adv_train" or method.startswith("iat_")
        return TrainConfig(
            method=method,
            epochs=t.epochs,
            batch_size=t.batch_size,
            schedule=LRSchedule(t.lr, t.lr_factor, t.lr_decay_epochs),
            momentum=t.momentum,
            attack=self.train_attack_config() if uses_attack else None,
            mix=self.mix_policy(method),
            seed=seed,
            hidden=self.model.hidden,
            adv_only=t.adv_only,
        )

    def eval_attacks(self) -> List[Optional[AttackConfig]]:
        """The white-box battery columns; None is the clean column."""
        e = self.eval
        attacks: List[Optional[AttackConfig]] = []
        for name in e.attacks:
            parsed = parse_attack_name(name)
            if parsed is None:
                attacks.append(None)
            elif parsed[0] == "fgsm":
                attacks.append(AttackConfig.fgsm(e.epsilon))
            else:
                attacks.append(AttackConfig.pgd(e.epsilon, e.step_size, parsed[1], e.random_start))
        return attacks

    def transfer_attack(self) -> AttackConfig:
        e = self.eval
        return AttackConfig.pgd(e.epsilon, e.step_size, 7, e.random_start)

    def sweep_base(self, axis: str) -> AttackConfig:
        """Shared settings of a sweep; the swept field is overwritten per row."""
        e = self.eval
        if axis == "epsilon":
            return AttackConfig.pgd(e.epsilon, e.sweep_step, 20, e.random_start)
        return AttackConfig.pgd(e.epsilon, e.step_size, 1, e.random_start)

    def has_stage(self, stage: str) -> bool:
        return stage in self.experiment.stages


def _build_section(name: str, items: Dict[str, str]) -> Any:
    cls = SECTIONS[name]
    hints = get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(items) - known)
    if unknown:
        raise ConfigError(f"[{name}]: unknown keys {unknown}; known keys are {sorted(known)}")
    values = {key: _convert(text, hints[key], f"{name}.{key}") for key, text in items.items()}
    try:
        return cls(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[{name}]: {e}") from e


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    """
    Parse experiment config text.

    Args:
        text: `key = value` lines under `[section]` headers
        source: name used in error messages

    Returns:
        ExperimentConfig with defaults for omitted keys and sections
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    # keep keys case-sensitive
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}") from e
    unknown = sorted(set(parser.sections()) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"{source}: unknown sections {unknown}; known sections are {sorted(SECTIONS)}")
    sections = {name: _build_section(name, dict(parser.items(name))) for name in parser.sections()}
    config = ExperimentConfig(**sections)
    logger.info(f"Parsed config {config.experiment.name} from {source} (hash {config.config_hash[:12]})")
    return config


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_config(text, str(path))
