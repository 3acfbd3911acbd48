"""Experiment orchestrator: train -> evaluate -> transfer -> sweep -> obfuscation -> analysis -> theory."""

import logging
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Tuple, Union

import numpy as np

from app.config import ExperimentConfig
from app.errors import DivergenceError
from app.services.analysis import ProbeConfig, collect_representations, probe_model, spectrum, weight_norms
from app.services.attacks import AttackConfig
from app.services.data import Dataset, Split, load_mnist, synth_blobs
from app.services.evaluation import (
    Diagnostic,
    EvalReport,
    TransferMatrix,
    eval_battery,
    eval_rng,
    monotone_violations,
    obfuscation_checks,
    summarize,
    sweep,
    transfer_matrix,
)
from app.services.nn import Model
from app.services.store import (
    RunStore,
    save_checkpoint,
    write_diagnostics,
    write_eval,
    write_history,
    write_json,
    write_norms,
    write_probes,
    write_sigmas,
    write_spectra,
    write_summary,
    write_transfer,
)
from app.services.theory import TheoryConfig, verify_theory
from app.services.train import TrainHistory, train

logger = logging.getLogger(__name__)

THEORY_PASS = {"consistent", "decreasing", "c1_nonnegative", "holds", "nondecreasing", "precondition_unmet"}


def model_id(method: str, seed: int) -> str:
    return f"{method}-s{seed}"


def load_dataset(cfg: ExperimentConfig, data_dir: Union[str, Path]) -> Dataset:
    """Dataset named by the [data] section; limits of 0 keep everything."""
    d = cfg.data
    if d.source == "synthetic":
        return synth_blobs(d.classes, d.per_class, d.dim, d.separation, d.seed, d.test_per_class)
    root = Path(data_dir)
    if d.source == "fashion_mnist":
        root = root / "fashion"
        if not root.is_dir():
            raise FileNotFoundError(f"Fashion-MNIST directory {root} not found")
    return load_mnist(root, d.source, d.train_limit or None, d.test_limit or None)


class CellResult(NamedTuple):
    method: str
    seed: int
    model: Optional[Model]
    history: TrainHistory
    error: Optional[str]


def train_cell(cfg: ExperimentConfig, method: str, seed: int, data: Split, class_count: int) -> CellResult:
    """Train one (method, seed) cell; failures come back as data so a pool can carry them."""
    try:
        model, history = train(cfg.train_config(method, seed), data, class_count)
        return CellResult(method, seed, model, history, None)
    except DivergenceError as e:
        logger.error(f"{model_id(method, seed)} diverged: {e}", exc_info=True)
        return CellResult(method, seed, None, e.history or TrainHistory(), str(e))
    except Exception as e:
        logger.error(f"{model_id(method, seed)} failed: {e}", exc_info=True)
        return CellResult(method, seed, None, TrainHistory(), f"{type(e).__name__}: {e}")


@dataclass
class RunResult:
    status: str
    manifest: Dict[str, Any]
    diagnostics: List[Diagnostic] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return 0 if self.status == "completed" else 1


def _versions() -> Dict[str, str]:
    try:
        lab = metadata.version("iat-lab")
    except metadata.PackageNotFoundError:
        lab = "unknown"
    return {"iat-lab": lab, "numpy": np.__version__, "python": platform.python_version()}


class ExperimentRunner:
    """Runs the configured stages and keeps the run manifest in step."""

    def __init__(self, config: ExperimentConfig, out_dir: Union[str, Path], data_dir: Union[str, Path],
                 jobs: Optional[int] = None):
        self.config = config
        self.data_dir = Path(data_dir)
        self.jobs = jobs or config.experiment.jobs
        self.store = RunStore(Path(out_dir) / config.experiment.name)
        self.config_hash = config.config_hash
        self.dataset: Optional[Dataset] = None
        self.models: Dict[str, Model] = {}
        self.seed_of: Dict[str, int] = {}
        self.method_of: Dict[str, str] = {}
        self.reports: List[EvalReport] = []
        self.transfers: Dict[int, TransferMatrix] = {}
        self.diagnostics: List[Diagnostic] = []
        self.theory_records: List[dict] = []
        logger.info(f"Experiment runner initialized for {config.experiment.name} -> {self.store.root}")

    def _stage(self, name: str, fn: Callable[[], None], needs_models: bool = True):
        if needs_models and not self.models:
            logger.warning(f"Stage: {name} skipped, no trained models")
            self.store.record_stage(name, "skipped", "no trained models")
            return
        logger.info(f"Stage: {name}")
        try:
            fn()
            self.store.record_stage(name, "completed")
        except Exception as e:
            logger.error(f"Stage {name} failed: {e}", exc_info=True)
            self.store.record_stage(name, "failed", f"{type(e).__name__}: {e}")
        self.store.save()

    def _write(self, name: str, writer: Callable[..., Path], *args: Any):
        writer(self.store.path_for(name), *args)
        self.store.record_file(name)

    def run(self) -> RunResult:
        """
        Run every configured stage.

        Returns:
            RunResult; status is "completed" only when no stage failed and no diagnostic fired
        """
        cfg = self.config
        self.store.reset(
            run=cfg.experiment.name,
            status="running",
            config_hash=self.config_hash,
            seeds=list(cfg.experiment.seeds),
            methods=list(cfg.experiment.methods),
            versions=_versions(),
        )
        self.store.path_for("config.ini").write_text(cfg.canonical_text(), encoding="utf-8")
        self.store.record_file("config.ini")

        if cfg.has_stage("train"):
            self._stage("data", self._load_data, needs_models=False)
            if self.dataset is not None:
                self._stage("train", self._train, needs_models=False)
        if cfg.has_stage("eval"):
            self._stage("eval", self._evaluate)
        if cfg.has_stage("transfer"):
            self._stage("transfer", self._transfer)
        if cfg.has_stage("sweep"):
            self._stage("sweep", self._sweep)
        if cfg.has_stage("obfuscation"):
            self._stage("obfuscation", self._obfuscation)
        if cfg.has_stage("analysis"):
            self._stage("analysis", self._analysis)
        if cfg.has_stage("theory"):
            self._stage("theory", self._theory, needs_models=False)

        if self.reports:
            summary = summarize(self.reports, self.method_of)
            seeds = {m: len(cfg.experiment.seeds) for m in summary}
            self._write("summary.csv", write_summary, summary, seeds, self.config_hash)
        if self.diagnostics or cfg.has_stage("obfuscation") or cfg.has_stage("sweep"):
            self._write("diagnostics.json", write_diagnostics, self.diagnostics, self.config_hash)
        status = self.store.finish(len(self.diagnostics))
        logger.info(f"Run {cfg.experiment.name} finished: {status}")
        return RunResult(status, self.store.manifest, list(self.diagnostics))

    def _load_data(self):
        self.dataset = load_dataset(self.config, self.data_dir)

    def _cells(self) -> List[Tuple[str, int]]:
        return [(m, s) for m in self.config.experiment.methods for s in self.config.experiment.seeds]

    def _train(self):
        data = self.dataset
        cells = self._cells()
        if self.jobs > 1 and len(cells) > 1:
            logger.info(f"Training {len(cells)} cells on {self.jobs} processes")
            with ProcessPoolExecutor(max_workers=self.jobs) as pool:
                futures = [pool.submit(train_cell, self.config, m, s, data.train, data.class_count) for m, s in cells]
                results = [f.result() for f in futures]
        else:
            results = [train_cell(self.config, m, s, data.train, data.class_count) for m, s in cells]

        failures = []
        for result in results:
            mid = model_id(result.method, result.seed)
            self._write(f"history/{mid}.csv", write_history, result.history, result.seed, self.config_hash)
            if result.model is None:
                failures.append(f"{mid}: {result.error}")
                continue
            path = f"models/{mid}.ckpt"
            echo = {"method": result.method, "seed": result.seed, "config_hash": self.config_hash}
            save_checkpoint(result.model, echo, self.store.path_for(path))
            self.store.record_file(path)
            self.models[mid] = result.model
            self.seed_of[mid] = result.seed
            self.method_of[mid] = result.method
        if failures:
            raise RuntimeError(f"{len(failures)} training cell(s) failed: {'; '.join(failures)}")

    def _evaluate(self):
        attacks = self.config.eval_attacks()
        for mid, model in self.models.items():
            self.reports.append(eval_battery(model, mid, self.dataset.test, attacks, eval_rng(self.seed_of[mid])))
        self._write("eval.csv", write_eval, self.reports, self.seed_of, self.config_hash)

    def _transfer(self):
        for seed in self.config.experiment.seeds:
            group = {mid: m for mid, m in self.models.items() if self.seed_of[mid] == seed}
            if len(group) < 2:
                continue
            matrix = transfer_matrix(group, self.dataset.test, self.config.transfer_attack(), eval_rng(seed))
            self.transfers[seed] = matrix
            self._write(f"transfer-s{seed}.csv", write_transfer, matrix, self.config_hash)

    def _obfuscation(self):
        e = self.config.eval
        unbounded = AttackConfig.pgd(e.unbounded_epsilon, max(e.step_size, e.unbounded_epsilon / 10), 20)
        for mid, model in self.models.items():
            matrix = self.transfers.get(self.seed_of[mid])
            self.diagnostics.extend(
                obfuscation_checks(mid, model, self.dataset.test, e.epsilon, e.step_size, unbounded, matrix)
            )

    def _sweep(self):
        e = self.config.eval
        chosen = set(e.sweep_methods) or set(self.config.experiment.methods)
        epsilon_reports, iteration_reports = [], []
        for mid, model in self.models.items():
            if self.method_of[mid] not in chosen:
                continue
            if e.sweep_epsilons:
                report = sweep(model, mid, self.dataset.test, "epsilon", list(e.sweep_epsilons),
                               self.config.sweep_base("epsilon"), eval_rng(self.seed_of[mid]))
                epsilon_reports.append(report)
                self.diagnostics.extend(monotone_violations(report))
            if e.sweep_iterations:
                iteration_reports.append(sweep(model, mid, self.dataset.test, "iterations", list(e.sweep_iterations),
                                               self.config.sweep_base("iterations"), eval_rng(self.seed_of[mid])))
        if epsilon_reports:
            self._write("sweep-epsilon.csv", write_eval, epsilon_reports, self.seed_of, self.config_hash)
        if iteration_reports:
            self._write("sweep-iterations.csv", write_eval, iteration_reports, self.seed_of, self.config_hash)

    def _analysis(self):
        a = self.config.analysis
        test = self.dataset.test.head(a.examples or None)
        spectra, norms, probes = [], {}, {}
        for mid, model in self.models.items():
            if a.spectrum:
                reps = collect_representations(model, test.x, test.y, a.layer, self.dataset.class_count)
                spectra.append(spectrum(reps, mid, a.layer))
            if a.norms:
                norms[mid] = weight_norms(model)
            if a.probe:
                probe_cfg = ProbeConfig(examples=a.probe_examples, hidden=a.probe_hidden, epochs=a.probe_epochs,
                                        seed=self.seed_of[mid])
                probes[mid] = probe_model(model, self.dataset.train.x, a.layer, probe_cfg)
        if spectra:
            self._write("spectrum.csv", write_spectra, spectra, self.config_hash)
            self._write("sigmas.csv", write_sigmas, spectra, self.config_hash)
        if norms:
            self._write("norms.csv", write_norms, norms, self.config_hash)
        if probes:
            self._write("probe.csv", write_probes, probes, a.layer, self.config_hash)

    def _theory(self):
        t = self.config.theory
        theory_cfg = TheoryConfig(
            seed=t.seed, n=t.n, d=t.d, alpha=t.alpha, beta=t.beta, epsilon=t.epsilon,
            mc_samples=t.mc_samples, scales=t.scales, prop1_instances=t.prop1_instances,
        )
        self.theory_records = verify_theory(theory_cfg)
        for record in self.theory_records:
            if record["verdict"] not in THEORY_PASS:
                self.diagnostics.append(Diagnostic(
                    f"theory_{record['check']}", "theory", f"verdict {record['verdict']}", {},
                ))
        payload = {"config_hash": self.config_hash, "seed": t.seed, "records": self.theory_records}
        self._write("theory.json", write_json, payload)


def run_experiment(config: ExperimentConfig, out_dir: Union[str, Path], data_dir: Union[str, Path],
                   jobs: Optional[int] = None) -> RunResult:
    """Build a runner for `config` and run it."""
    return ExperimentRunner(config, out_dir, data_dir, jobs).run()
