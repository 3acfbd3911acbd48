"""CSV and JSON report writers.

Every table has a fixed column order and a header row; every row carries the
config hash of the run, and the seed when one applies. Numbers are written with
10 significant digits. Non-finite numbers are refused.
"""

import csv
import json
import logging
import math
from dataclasses import asdict, is_dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

from app.services.analysis import LayerNorm, ProbeResult, SpectrumReport
from app.services.evaluation import Diagnostic, EvalReport, TransferMatrix
from app.services.train import TrainHistory

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "lr", "clean_loss", "adv_loss", "combined_loss", "train_error_pct", "seed", "config_hash")
EVAL_COLUMNS = ("model_id", "attack_kind", "epsilon", "step_size", "iterations", "error_pct", "n", "seed", "config_hash")
TRANSFER_COLUMNS = ("target", "source", "error_pct", "config_hash")
SPECTRUM_COLUMNS = ("model_id", "layer", "class_id", "soft_rank", "sigma_max", "sigma_count", "config_hash")
SIGMA_COLUMNS = ("model_id", "layer", "class_id", "k", "sigma", "config_hash")
NORM_COLUMNS = ("model_id", "layer", "frobenius", "spectral", "config_hash")
PROBE_COLUMNS = ("model_id", "layer", "accuracy_pct", "examples", "label_fraction", "config_hash")
SUMMARY_COLUMNS = ("method", "attack_kind", "mean_error_pct", "seeds", "config_hash")

PathLike = Union[str, Path]


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"refusing to write non-finite value {value}")
        return format(value, ".10g")
    return str(value)


def write_csv(path: PathLike, columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        count = 0
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in columns])
            count += 1
    logger.info(f"Wrote {count} rows to {path}")
    return path


def _plain(obj: Any) -> Any:
    if is_dataclass(obj) and not isinstance(obj, type):
        return _plain(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):
        return obj.item()
    return obj


def write_json(path: PathLike, payload: Any) -> Path:
    """Sorted-key JSON; NaN and infinity raise ValueError."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_plain(payload), indent=2, sort_keys=True, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path


def write_history(path: PathLike, history: TrainHistory, seed: int, config_hash: str) -> Path:
    rows = (
        {
            "epoch": r.epoch, "lr": r.lr, "clean_loss": r.clean_loss, "adv_loss": r.adv_loss,
            "combined_loss": r.combined_loss, "train_error_pct": r.train_error,
            "seed": seed, "config_hash": config_hash,
        }
        for r in history.records
    )
    return write_csv(path, HISTORY_COLUMNS, rows)


def eval_rows(reports: Sequence[EvalReport], seed_of: Mapping[str, int], config_hash: str) -> List[Dict[str, Any]]:
    rows = []
    for report in reports:
        for row in report.rows:
            rows.append({
                "model_id": report.model_id, "attack_kind": row.attack_kind, "epsilon": row.epsilon,
                "step_size": row.step_size, "iterations": row.iterations, "error_pct": row.error_pct,
                "n": row.n, "seed": seed_of.get(report.model_id), "config_hash": config_hash,
            })
    return rows


def write_eval(path: PathLike, reports: Sequence[EvalReport], seed_of: Mapping[str, int], config_hash: str) -> Path:
    return write_csv(path, EVAL_COLUMNS, eval_rows(reports, seed_of, config_hash))


def write_transfer(path: PathLike, matrix: TransferMatrix, config_hash: str) -> Path:
    rows = (
        {"target": target, "source": source, "error_pct": matrix.grid[t][s], "config_hash": config_hash}
        for t, target in enumerate(matrix.model_ids)
        for s, source in enumerate(matrix.model_ids)
    )
    return write_csv(path, TRANSFER_COLUMNS, rows)


def write_spectra(path: PathLike, reports: Sequence[SpectrumReport], config_hash: str) -> Path:
    rows = (
        {
            "model_id": report.model_id, "layer": report.layer_index, "class_id": c.class_id,
            "soft_rank": c.soft_rank, "sigma_max": c.sigmas[0] if c.sigmas else None,
            "sigma_count": len(c.sigmas), "config_hash": config_hash,
        }
        for report in reports
        for c in report.classes
    )
    return write_csv(path, SPECTRUM_COLUMNS, rows)


def write_sigmas(path: PathLike, reports: Sequence[SpectrumReport], config_hash: str) -> Path:
    """Full per-class spectrum, one row per singular value, k counted from 1."""
    rows = (
        {"model_id": report.model_id, "layer": report.layer_index, "class_id": c.class_id, "k": k,
         "sigma": sigma, "config_hash": config_hash}
        for report in reports
        for c in report.classes
        for k, sigma in enumerate(c.sigmas, start=1)
    )
    return write_csv(path, SIGMA_COLUMNS, rows)


def write_norms(path: PathLike, norms: Mapping[str, Sequence[LayerNorm]], config_hash: str) -> Path:
    rows = (
        {"model_id": model_id, "layer": n.layer, "frobenius": n.frobenius, "spectral": n.spectral,
         "config_hash": config_hash}
        for model_id, layers in norms.items()
        for n in layers
    )
    return write_csv(path, NORM_COLUMNS, rows)


def write_probes(path: PathLike, probes: Mapping[str, ProbeResult], layer: int, config_hash: str) -> Path:
    rows = (
        {"model_id": model_id, "layer": layer, "accuracy_pct": p.accuracy_pct, "examples": p.examples,
         "label_fraction": p.label_fraction, "config_hash": config_hash}
        for model_id, p in probes.items()
    )
    return write_csv(path, PROBE_COLUMNS, rows)


def write_summary(path: PathLike, summary: Mapping[str, Mapping[str, float]],
                  seeds: Mapping[str, int], config_hash: str) -> Path:
    """One row per (method, attack kind) with the mean error over seeds."""
    rows = (
        {"method": method, "attack_kind": kind, "mean_error_pct": value, "seeds": seeds.get(method),
         "config_hash": config_hash}
        for method, kinds in summary.items()
        for kind, value in kinds.items()
    )
    return write_csv(path, SUMMARY_COLUMNS, rows)


def write_diagnostics(path: PathLike, diagnostics: Sequence[Diagnostic], config_hash: str,
                      extra: Optional[Mapping[str, Any]] = None) -> Path:
    payload = {"config_hash": config_hash, "diagnostics": [asdict(d) for d in diagnostics]}
    if extra:
        payload.update(extra)
    return write_json(path, payload)
