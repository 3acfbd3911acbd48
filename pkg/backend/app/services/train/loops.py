"""Training loops for ERM, mixup, manifold mixup, adversarial and interpolated adversarial training."""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from app.errors import DivergenceError, NonFiniteError
from app.services.attacks import AttackConfig, generate
from app.services.data import Split
from app.services.mix import MixPolicy, make_draw, mixed_loss
from app.services.nn import SGD, Model, backward, encode_labels, forward, model_loss, predict

logger = logging.getLogger(__name__)

METHODS = ("baseline", "mixup", "manifold_mixup", "adv_train", "iat_mixup", "iat_manifold")
DIVERGENCE_LOSS = 1e6

# Independent generator streams derived from the run seed
_SHUFFLE, _MIX, _ATTACK = 1, 2, 3

AttackFn = Callable[..., np.ndarray]


@dataclass(frozen=True)
class LRSchedule:
    initial: float = 0.1
    factor: float = 0.1
    decay_epochs: Tuple[int, ...] = (20, 30)

    def __post_init__(self):
        if self.initial <= 0:
            raise ValueError(f"initial lr must be > 0, got {self.initial}")
        epochs = tuple(int(e) for e in self.decay_epochs)
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ValueError(f"lr decay epochs must be strictly increasing, got {epochs}")
        object.__setattr__(self, "decay_epochs", epochs)

    def lr_at(self, epoch: int) -> float:
        return lr_at(self, epoch)


def lr_at(schedule: LRSchedule, epoch: int) -> float:
    """Piecewise-constant step schedule; the decay applies from the listed epoch on."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    decays = sum(1 for e in schedule.decay_epochs if epoch >= e)
    return schedule.initial * schedule.factor ** decays


_MIX_MODES = {
    "mixup": ("input",),
    "manifold_mixup": ("manifold",),
    "iat_mixup": ("input", "none"),
    "iat_manifold": ("manifold", "none"),
}


@dataclass(frozen=True)
class TrainConfig:
    method: str
    epochs: int = 40
    batch_size: int = 64
    schedule: LRSchedule = field(default_factory=LRSchedule)
    momentum: float = 0.9
    attack: Optional[AttackConfig] = None
    mix: Optional[MixPolicy] = None
    seed: int = 0
    hidden: Tuple[int, ...] = (256, 256, 256)
    adv_only: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if (self.method.startswith("iat_") or self.method == "adv_train") and self.attack is None:
            raise ValueError(f"method {self.method} needs a training attack")
        allowed = _MIX_MODES.get(self.method)
        if allowed is not None and (self.mix is None or self.mix.mode not in allowed):
            raise ValueError(f"method {self.method} needs a mix policy with mode in {allowed}")

    @property
    def uses_attack(self) -> bool:
        return self.method == "adv_train" or self.method.startswith("iat_")


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    clean_loss: float
    adv_loss: Optional[float]
    combined_loss: float
    train_error: float


@dataclass
class TrainHistory:
    records: List[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def combined(self) -> List[float]:
        return [r.combined_loss for r in self.records]


class StepLosses(NamedTuple):
    clean: float
    adv: Optional[float]
    combined: float


def _average(a: Sequence[np.ndarray], b: Sequence[np.ndarray]) -> List[np.ndarray]:
    return [0.5 * (ga + gb) for ga, gb in zip(a, b)]


def _plain(model: Model, x: np.ndarray, y: np.ndarray) -> Tuple[float, List[np.ndarray]]:
    logits, tape = forward(model, x)
    loss, dlogits = model_loss(model.class_count, logits, y)
    grads, _ = backward(model, tape, dlogits)
    return loss, grads


def _mixed(model: Model, x: np.ndarray, y: np.ndarray, policy: MixPolicy,
           rng: np.random.Generator) -> Tuple[float, List[np.ndarray]]:
    draw = make_draw(policy, x.shape[0], rng)
    result = mixed_loss(model, x, y, draw)
    grads, _ = backward(model, result.tape, result.dlogits)
    return result.loss, grads


def iat_update(model: Model, x: np.ndarray, y: np.ndarray, cfg: TrainConfig, optimizer: SGD,
               mix_rng: np.random.Generator, attack_rng: Optional[np.random.Generator] = None,
               attack_fn: AttackFn = generate) -> StepLosses:
    """
    One interpolated adversarial training step.

    Args:
        model: model being trained (updated in place)
        x: clean batch
        y: encoded labels
        cfg: training config with attack and mix policy
        optimizer: SGD holding lr and velocity
        mix_rng: generator for the two mix draws
        attack_rng: generator for PGD random starts
        attack_fn: attack used for step 2, called on unmixed inputs and labels

    Returns:
        StepLosses(clean, adv, combined) with combined = (clean + adv) / 2
    """
    loss_clean, grads_clean = _mixed(model, x, y, cfg.mix, mix_rng)
    x_adv = attack_fn(model, x, y, cfg.attack, attack_rng)
    if not np.all(np.isfinite(x_adv)):
        raise NonFiniteError("training attack produced non-finite inputs")
    loss_adv, grads_adv = _mixed(model, x_adv, y, cfg.mix, mix_rng)
    optimizer.step(_average(grads_clean, grads_adv))
    return StepLosses(loss_clean, loss_adv, 0.5 * (loss_clean + loss_adv))


def _step(model: Model, x: np.ndarray, y: np.ndarray, cfg: TrainConfig, optimizer: SGD,
          mix_rng: np.random.Generator, attack_rng: np.random.Generator, attack_fn: AttackFn) -> StepLosses:
    method = cfg.method
    if method.startswith("iat_"):
        return iat_update(model, x, y, cfg, optimizer, mix_rng, attack_rng, attack_fn)
    if method == "baseline":
        loss, grads = _plain(model, x, y)
        optimizer.step(grads)
        return StepLosses(loss, None, loss)
    if method in ("mixup", "manifold_mixup"):
        loss, grads = _mixed(model, x, y, cfg.mix, mix_rng)
        optimizer.step(grads)
        return StepLosses(loss, None, loss)

    x_adv = attack_fn(model, x, y, cfg.attack, attack_rng)
    loss_adv, grads_adv = _plain(model, x_adv, y)
    if cfg.adv_only:
        loss_clean, _ = model_loss(model.class_count, forward(model, x)[0], y)
        optimizer.step(grads_adv)
        return StepLosses(loss_clean, loss_adv, loss_adv)
    loss_clean, grads_clean = _plain(model, x, y)
    optimizer.step(_average(grads_clean, grads_adv))
    return StepLosses(loss_clean, loss_adv, 0.5 * (loss_clean + loss_adv))


def train(run: TrainConfig, data: Split, class_count: int,
          model: Optional[Model] = None, attack_fn: AttackFn = generate) -> Tuple[Model, TrainHistory]:
    """
    Train one (method, seed) cell.

    Args:
        run: training config
        data: training split (inputs in [0, 1], class ids)
        class_count: number of classes
        model: start from this model instead of a fresh seeded MLP
        attack_fn: training attack

    Returns:
        (model, history)
    """
    x = np.asarray(data.x, dtype=np.float64)
    labels = np.asarray(data.y)
    n = x.shape[0]
    if n == 0:
        raise ValueError("training data is empty")
    y = encode_labels(labels, class_count)
    if model is None:
        model = Model.mlp(x.shape[1], run.hidden, class_count, seed=run.seed)
    shuffle_rng = np.random.default_rng([run.seed, _SHUFFLE])
    mix_rng = np.random.default_rng([run.seed, _MIX])
    attack_rng = np.random.default_rng([run.seed, _ATTACK])
    optimizer = SGD(model, run.schedule.initial, run.momentum)
    history = TrainHistory()

    logger.info(f"Training {run.method} (seed {run.seed}) on {n} examples for {run.epochs} epochs")
    for epoch in range(run.epochs):
        optimizer.lr = lr_at(run.schedule, epoch)
        order = shuffle_rng.permutation(n)
        sums = np.zeros(3)
        steps = 0
        adv_seen = False
        for start in range(0, n, run.batch_size):
            idx = order[start:start + run.batch_size]
            if idx.shape[0] < 2:
                continue
            try:
                losses = _step(model, x[idx], y[idx], run, optimizer, mix_rng, attack_rng, attack_fn)
            except NonFiniteError as e:
                logger.error(f"Epoch {epoch}: non-finite values, aborting: {e}", exc_info=True)
                raise DivergenceError(f"training diverged in epoch {epoch}: {e}", history) from e
            if not np.isfinite(losses.combined) or losses.combined > DIVERGENCE_LOSS:
                logger.error(f"Epoch {epoch}: loss {losses.combined} diverged")
                raise DivergenceError(f"training diverged in epoch {epoch}: loss {losses.combined}", history)
            sums += [losses.clean, losses.adv if losses.adv is not None else 0.0, losses.combined]
            adv_seen = adv_seen or losses.adv is not None
            steps += 1

        steps = max(steps, 1)
        error = 100.0 * float(np.mean(predict(model, x) != np.asarray(labels)))
        record = EpochRecord(
            epoch=epoch,
            lr=optimizer.lr,
            clean_loss=float(sums[0] / steps),
            adv_loss=float(sums[1] / steps) if adv_seen else None,
            combined_loss=float(sums[2] / steps),
            train_error=error,
        )
        history.records.append(record)
        logger.info(
            f"Epoch {epoch}: lr={record.lr:g} clean={record.clean_loss:.4f} "
            f"adv={record.adv_loss if record.adv_loss is None else round(record.adv_loss, 4)} "
            f"combined={record.combined_loss:.4f} train_error={error:.2f}%"
        )
    return model, history
