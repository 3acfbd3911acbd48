"""Evaluation battery."""

from .battery import (
    EvalRow,
    EvalReport,
    TransferMatrix,
    Diagnostic,
    eval_clean,
    eval_whitebox,
    eval_transfer,
    eval_battery,
    eval_rng,
    transfer_matrix,
    sweep,
    monotone_violations,
    obfuscation_checks,
    summarize,
)

__all__ = [
    'EvalRow', 'EvalReport', 'TransferMatrix', 'Diagnostic', 'eval_clean', 'eval_whitebox',
    'eval_transfer', 'eval_battery', 'eval_rng', 'transfer_matrix', 'sweep', 'monotone_violations',
    'obfuscation_checks', 'summarize',
]
