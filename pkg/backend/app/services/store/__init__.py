"""Checkpoints, run manifests and report files."""

from .checkpoint import FORMAT_VERSION, save_checkpoint, read_checkpoint, load_checkpoint
from .run_store import RunStore, list_runs, load_manifest
from .reports import (
    HISTORY_COLUMNS,
    EVAL_COLUMNS,
    eval_rows,
    write_csv,
    write_json,
    write_history,
    write_eval,
    write_transfer,
    write_spectra,
    write_sigmas,
    write_norms,
    write_probes,
    write_summary,
    write_diagnostics,
)

__all__ = [
    'FORMAT_VERSION', 'save_checkpoint', 'read_checkpoint', 'load_checkpoint',
    'RunStore', 'list_runs', 'load_manifest',
    'HISTORY_COLUMNS', 'EVAL_COLUMNS', 'eval_rows', 'write_csv', 'write_json', 'write_history', 'write_eval',
    'write_transfer', 'write_spectra', 'write_sigmas', 'write_norms', 'write_probes', 'write_summary',
    'write_diagnostics',
]
