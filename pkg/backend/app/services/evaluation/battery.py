"""Clean, white-box and transfer error rates, sweeps, and gradient-obfuscation checks."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from app.errors import ShapeError
from app.services.attacks import AttackConfig, generate
from app.services.data import Split
from app.services.nn import Model, encode_labels, predict

logger = logging.getLogger(__name__)

CHUNK = 1000
BLACKBOX_TOLERANCE = 2.0
UNBOUNDED_MIN_ERROR = 99.0
EVAL_STREAM = 4


@dataclass(frozen=True)
class EvalRow:
    attack_kind: str
    epsilon: float
    step_size: float
    iterations: int
    error_pct: float
    n: int

    def __post_init__(self):
        if not 0.0 <= self.error_pct <= 100.0:
            raise ValueError(f"error {self.error_pct} outside [0, 100]")


@dataclass
class EvalReport:
    model_id: str
    rows: List[EvalRow] = field(default_factory=list)
    axis: Optional[str] = None

    def error_for(self, attack_kind: str) -> Optional[float]:
        for row in self.rows:
            if row.attack_kind == attack_kind:
                return row.error_pct
        return None


@dataclass
class TransferMatrix:
    """grid[target][source] = error % of `target` on examples crafted against `source`."""

    model_ids: List[str]
    grid: List[List[float]]

    def whitebox(self, target: str) -> float:
        k = self.model_ids.index(target)
        return self.grid[k][k]

    def violations(self, tolerance: float = BLACKBOX_TOLERANCE) -> List["Diagnostic"]:
        found = []
        for t, target in enumerate(self.model_ids):
            for s, source in enumerate(self.model_ids):
                if s != t and self.grid[t][s] > self.grid[t][t] + tolerance:
                    found.append(Diagnostic(
                        "blackbox_exceeds_whitebox", target,
                        f"transfer from {source} gives {self.grid[t][s]:.2f}% > white-box {self.grid[t][t]:.2f}% + {tolerance}",
                        {"source": source, "transfer": self.grid[t][s], "whitebox": self.grid[t][t]},
                    ))
        return found


@dataclass
class Diagnostic:
    """A named invariant violation surfaced in reports instead of being hidden."""

    name: str
    model_id: str
    message: str
    values: Dict[str, float] = field(default_factory=dict)


def eval_rng(seed: int) -> np.random.Generator:
    """Random-start stream for evaluation attacks, independent of the training streams."""
    return np.random.default_rng([seed, EVAL_STREAM])


def _error_pct(pred: np.ndarray, y: np.ndarray) -> float:
    return 100.0 * float(np.count_nonzero(pred != y)) / y.shape[0]


def _row(cfg: Optional[AttackConfig], error: float, n: int) -> EvalRow:
    if cfg is None:
        return EvalRow("clean", 0.0, 0.0, 0, error, n)
    return EvalRow(cfg.describe(), cfg.epsilon, cfg.step_size, cfg.iterations, error, n)


def eval_clean(model: Model, data: Split) -> float:
    """Argmax error %, ties broken toward the lowest class index."""
    if len(data) == 0:
        raise ValueError("test set is empty")
    return _error_pct(predict(model, data.x), data.y)


def _adversarial_predictions(target: Model, source: Model, data: Split, attack: AttackConfig,
                             rng: Optional[np.random.Generator]) -> np.ndarray:
    preds = []
    for start in range(0, len(data), CHUNK):
        x = data.x[start:start + CHUNK]
        y = encode_labels(data.y[start:start + CHUNK], source.class_count)
        x_adv = generate(source, x, y, attack, rng)
        preds.append(predict(target, x_adv))
    return np.concatenate(preds)


def eval_whitebox(model: Model, data: Split, attack: AttackConfig,
                  rng: Optional[np.random.Generator] = None) -> float:
    """Error % on adversarial examples crafted against the same model."""
    if len(data) == 0:
        raise ValueError("test set is empty")
    if attack.epsilon == 0:
        return eval_clean(model, data)
    return _error_pct(_adversarial_predictions(model, model, data, attack, rng), data.y)


def eval_transfer(target: Model, source: Model, data: Split, attack: AttackConfig,
                  rng: Optional[np.random.Generator] = None) -> float:
    """Error % of `target` on examples crafted against `source`."""
    if target.input_dim != source.input_dim or target.class_count != source.class_count:
        raise ShapeError(
            f"source ({source.input_dim} -> {source.class_count}) and target "
            f"({target.input_dim} -> {target.class_count}) dimensions differ"
        )
    if len(data) == 0:
        raise ValueError("test set is empty")
    return _error_pct(_adversarial_predictions(target, source, data, attack, rng), data.y)


def eval_battery(model: Model, model_id: str, data: Split, attacks: Sequence[Optional[AttackConfig]],
                 rng: Optional[np.random.Generator] = None) -> EvalReport:
    """One row per attack; None stands for the clean column. `rng` feeds random starts."""
    report = EvalReport(model_id)
    for attack in attacks:
        error = eval_clean(model, data) if attack is None else eval_whitebox(model, data, attack, rng)
        report.rows.append(_row(attack, error, len(data)))
        logger.info(f"{model_id}: {report.rows[-1].attack_kind} error {error:.2f}%")
    return report


def transfer_matrix(models: Mapping[str, Model], data: Split, attack: AttackConfig,
                    rng: Optional[np.random.Generator] = None) -> TransferMatrix:
    ids = list(models)
    grid = [[eval_transfer(models[t], models[s], data, attack, rng) for s in ids] for t in ids]
    return TransferMatrix(ids, grid)


def sweep(model: Model, model_id: str, data: Split, axis: str, values: Sequence[float],
          base: AttackConfig, rng: Optional[np.random.Generator] = None) -> EvalReport:
    """
    White-box error along an epsilon or iteration axis.

    Args:
        model: evaluated model
        model_id: identifier carried into the report
        data: test split
        axis: "epsilon" or "iterations"
        values: ascending axis values
        base: attack whose other settings are shared by every row
        rng: random-start generator, needed when base.random_start

    Returns:
        EvalReport with one row per value
    """
    if not values:
        raise ValueError("sweep axis is empty")
    if any(b < a for a, b in zip(values, values[1:])):
        raise ValueError(f"sweep axis must be sorted ascending, got {list(values)}")
    if axis not in ("epsilon", "iterations"):
        raise ValueError(f"unknown sweep axis {axis!r}")
    report = EvalReport(model_id, axis=axis)
    for value in values:
        cfg = base.with_epsilon(float(value)) if axis == "epsilon" else base.with_iterations(int(value))
        error = eval_whitebox(model, data, cfg, rng)
        report.rows.append(_row(cfg, error, len(data)))
        logger.info(f"{model_id}: sweep {axis}={value} error {error:.2f}%")
    return report


def monotone_violations(report: EvalReport) -> List[Diagnostic]:
    """Rows whose error dropped below the previous row's, named by the swept axis."""
    axis = report.axis or "epsilon"
    found = []
    for prev, row in zip(report.rows, report.rows[1:]):
        if row.error_pct < prev.error_pct:
            before, after = getattr(prev, axis), getattr(row, axis)
            found.append(Diagnostic(
                "sweep_not_monotone", report.model_id,
                f"error fell from {prev.error_pct:.2f}% ({axis}={before}) to {row.error_pct:.2f}% ({axis}={after})",
                {"previous": prev.error_pct, "current": row.error_pct, axis: float(after)},
            ))
    return found


def obfuscation_checks(model_id: str, model: Model, data: Split, epsilon: float, step_size: float,
                       unbounded: AttackConfig, transfer: Optional[TransferMatrix] = None) -> List[Diagnostic]:
    """
    Sanity checks against gradient obfuscation.

    Args:
        model_id: identifier used in the transfer matrix and diagnostics
        model: evaluated model
        data: test split
        epsilon: radius shared by the FGSM/PGD-7 comparison
        step_size: PGD-7 step
        unbounded: attack covering the whole data range
        transfer: transfer matrix containing this model, if one was computed

    Returns:
        Diagnostics for every failed check (empty when all pass)
    """
    found: List[Diagnostic] = []
    if transfer is not None and model_id in transfer.model_ids:
        found.extend(d for d in transfer.violations() if d.model_id == model_id)

    error_fgsm = eval_whitebox(model, data, AttackConfig.fgsm(epsilon))
    error_pgd = eval_whitebox(model, data, AttackConfig.pgd(epsilon, step_size, 7))
    if error_pgd < error_fgsm:
        found.append(Diagnostic(
            "iterative_weaker_than_single_step", model_id,
            f"PGD-7 error {error_pgd:.2f}% < FGSM error {error_fgsm:.2f}% at eps={epsilon}",
            {"pgd7": error_pgd, "fgsm": error_fgsm, "epsilon": epsilon},
        ))

    error_unbounded = eval_whitebox(model, data, unbounded)
    if error_unbounded < UNBOUNDED_MIN_ERROR:
        found.append(Diagnostic(
            "unbounded_attack_failed", model_id,
            f"unbounded attack only reached {error_unbounded:.2f}% error",
            {"error": error_unbounded, "epsilon": unbounded.epsilon},
        ))
    for diagnostic in found:
        logger.warning(f"Diagnostic {diagnostic.name} for {model_id}: {diagnostic.message}")
    return found


def summarize(reports: Sequence[EvalReport], method_of: Mapping[str, str]) -> Dict[str, Dict[str, float]]:
    """Mean error per (method, attack kind) over seeds."""
    buckets: Dict[str, Dict[str, List[float]]] = {}
    for report in reports:
        method = method_of[report.model_id]
        for row in report.rows:
            buckets.setdefault(method, {}).setdefault(row.attack_kind, []).append(row.error_pct)
    return {
        method: {kind: float(np.mean(values)) for kind, values in kinds.items()}
        for method, kinds in buckets.items()
    }
