"""Per-run output directory with a JSON manifest."""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
STATUSES = ("completed", "failed", "skipped")


class RunStore:
    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest: Dict[str, Any] = {}
        self.initialize()

    @property
    def name(self) -> str:
        return self.root.name

    def initialize(self):
        """Load an existing manifest or start a fresh one."""
        path = self.root / MANIFEST
        try:
            if path.exists():
                logger.info(f"Loading existing manifest from {path}")
                with open(path, 'r') as f:
                    self.manifest = json.load(f)
            else:
                self.manifest = self._fresh()
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"Error loading manifest {path}: {e}", exc_info=True)
            self.manifest = self._fresh()
        logger.info(f"RunStore initialized at {self.root} with {len(self.manifest['stages'])} stages")

    def _fresh(self) -> Dict[str, Any]:
        return {"run": self.root.name, "status": "running", "stages": [], "files": [], "seeds": [],
                "versions": {}, "config_hash": None, "diagnostics": 0}

    def reset(self, **fields: Any):
        """Start over, keeping only the given top-level fields."""
        self.manifest = self._fresh()
        self.manifest.update(fields)

    def path_for(self, name: str) -> Path:
        """Path inside the run directory; only plain relative names are allowed."""
        target = (self.root / name).resolve()
        if self.root.resolve() not in target.parents:
            raise ValueError(f"{name!r} escapes the run directory")
        target.parent.mkdir(parents=True, exist_ok=True)
        return target

    def record_file(self, name: str):
        if name not in self.manifest["files"]:
            self.manifest["files"].append(name)

    def record_stage(self, name: str, status: str, error: Optional[str] = None):
        if status not in STATUSES:
            raise ValueError(f"unknown stage status {status!r}")
        entry: Dict[str, Any] = {"name": name, "status": status}
        if error is not None:
            entry["error"] = error
        self.manifest["stages"].append(entry)

    @property
    def failed_stages(self) -> List[str]:
        return [s["name"] for s in self.manifest["stages"] if s["status"] == "failed"]

    def finish(self, diagnostics: int = 0) -> str:
        self.manifest["diagnostics"] = diagnostics
        if self.failed_stages:
            self.manifest["status"] = "partial"
        elif diagnostics:
            self.manifest["status"] = "completed_with_diagnostics"
        else:
            self.manifest["status"] = "completed"
        self.save()
        return self.manifest["status"]

    def save(self):
        """Write the manifest with sorted keys so equal runs give equal bytes."""
        path = self.root / MANIFEST
        try:
            with open(path, 'w') as f:
                json.dump(self.manifest, f, indent=2, sort_keys=True)
                f.write("\n")
            logger.info(f"Manifest saved with {len(self.manifest['stages'])} stages")
        except OSError as e:
            logger.error(f"Error saving manifest: {e}", exc_info=True)
            raise


def load_manifest(run_dir: Union[str, Path]) -> Optional[Dict[str, Any]]:
    path = Path(run_dir) / MANIFEST
    if not path.exists():
        return None
    with open(path, 'r') as f:
        return json.load(f)


def list_runs(out_dir: Union[str, Path]) -> List[Dict[str, Any]]:
    """Manifests of every run directory under `out_dir`, sorted by name."""
    out_dir = Path(out_dir)
    if not out_dir.is_dir():
        return []
    runs = []
    for child in sorted(out_dir.iterdir()):
        if not child.is_dir():
            continue
        try:
            manifest = load_manifest(child)
        except (OSError, json.JSONDecodeError) as e:
            logger.warning(f"Skipping unreadable manifest in {child}: {e}")
            continue
        if manifest is not None:
            runs.append(manifest)
    return runs
