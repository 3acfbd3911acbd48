"""Experiment orchestration."""

from .experiment_runner import ExperimentRunner, RunResult, load_dataset, model_id, run_experiment, train_cell

__all__ = ['ExperimentRunner', 'RunResult', 'load_dataset', 'model_id', 'run_experiment', 'train_cell']
