"""
Run management for organizing simulation outputs.

Every CLI invocation writes into its own run directory: result tables as CSV,
JSON summaries under ``artifacts/``, and a ``metadata.json`` with status and errors. An
``index.json`` in the base directory lists all runs.
"""

import json
import logging
import math
import shutil
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from optolattice import __version__

logger = logging.getLogger(__name__)


class ResultEncoder(json.JSONEncoder):
    """JSON encoder for datetimes, numpy scalars and arrays, and complex numbers."""

    def default(self, obj):
        if isinstance(obj, datetime):
            return obj.isoformat()
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, np.bool_):
            return bool(obj)
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, complex):
            return {"re": obj.real, "im": obj.imag}
        return super().default(obj)


def _json_safe(value: Any) -> Any:
    # JSON has no nan/inf; emit the same sentinels as the CSV body.
    if isinstance(value, (float, np.floating)) and not math.isfinite(value):
        return str(format(float(value), ".17g"))
    if isinstance(value, dict):
        return {key: _json_safe(v) for key, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def format_value(value: Any) -> str:
    """Deterministic text form of a table cell."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


@dataclass
class ResultTable:
    """Rows of one subcommand with a fixed column schema and provenance."""
    columns: List[Tuple[str, str]]
    config_hash: str
    rows: List[List[Any]] = field(default_factory=list)
    version: str = __version__
    timestamp: str = field(default_factory=lambda: datetime.now().isoformat(timespec="seconds"))

    @property
    def names(self) -> List[str]:
        return [name for name, _ in self.columns] + ["config_hash"]

    def add_row(self, *values: Any, config_hash: Optional[str] = None) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"expected {len(self.columns)} values, got {len(values)}")
        self.rows.append([*values, config_hash or self.config_hash])

    def body(self) -> str:
        """Header row and data rows, without provenance."""
        lines = [",".join(self.names)]
        lines.extend(",".join(format_value(v) for v in row) for row in self.rows)
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        units = ", ".join(f"{name} [{unit}]" for name, unit in self.columns)
        header = [
            f"# optolattice {self.version}",
            f"# config_hash: {self.config_hash}",
            f"# created: {self.timestamp}",
            f"# units: {units}",
        ]
        return "\n".join(header) + "\n" + self.body()

    def column(self, name: str) -> List[Any]:
        index = self.names.index(name)
        return [row[index] for row in self.rows]

    def to_summary(self) -> Dict[str, Any]:
        return {
            "columns": self.names,
            "units": [unit for _, unit in self.columns] + [""],
            "rows": _json_safe(self.rows),
            "provenance": {
                "config_hash": self.config_hash,
                "version": self.version,
                "timestamp": self.timestamp,
            },
        }


class RunManager:
    """Manages simulation runs and their artifacts."""

    def __init__(self, base_dir: str = "runs") -> None:
        self.base_dir = Path(base_dir)
        self.base_dir.mkdir(parents=True, exist_ok=True)
        self.current_run_id: Optional[str] = None
        self.current_run_dir: Optional[Path] = None
        self._load_index()

    def _load_index(self) -> None:
        self.index_file = self.base_dir / "index.json"
        if self.index_file.exists():
            with open(self.index_file, "r") as f:
                self.index = json.load(f)
        else:
            self.index = {"runs": {}}
            self._save_index()

    def _save_index(self) -> None:
        with open(self.index_file, "w") as f:
            json.dump(self.index, f, indent=2, cls=ResultEncoder)

    def start_run(self, run_id: str, details: Optional[Dict[str, Any]] = None) -> Path:
        """Start a new run and return its directory."""
        self.current_run_id = run_id
        self.current_run_dir = self.base_dir / run_id
        self.current_run_dir.mkdir(parents=True, exist_ok=True)

        metadata = {
            "run_id": run_id,
            "start_time": datetime.now().isoformat(),
            "status": "running",
            "errors": [],
        }
        if details:
            metadata.update(details)
        self._save_metadata(metadata)

        self.index["runs"][run_id] = {
            "created_at": metadata["start_time"],
            "status": metadata["status"],
            "path": str(self.current_run_dir),
        }
        self._save_index()

        logger.info(f"Created new run: {run_id}")
        return self.current_run_dir

    def end_run(self, status: str = "completed",
                details: Optional[Dict[str, Any]] = None) -> None:
        """End the current run."""
        if not self.current_run_id or not self.current_run_dir:
            return
        self.update_run_status(self.current_run_id, status,
                               {"end_time": datetime.now().isoformat(), **(details or {})})
        self.current_run_id = None
        self.current_run_dir = None

    def get_run_dir(self, run_id: str) -> Path:
        if run_id not in self.index["runs"]:
            raise ValueError(f"Run {run_id} not found")
        return Path(self.index["runs"][run_id]["path"])

    def save_table(self, run_id: str, name: str, table: ResultTable) -> Path:
        """Write a result table as ``<name>.csv`` in the run directory."""
        path = self.get_run_dir(run_id) / f"{name}.csv"
        path.write_text(table.to_csv(), encoding="utf-8")
        logger.info(f"Saved table {name} ({len(table.rows)} rows) for run {run_id}")
        return path

    def save_artifact(self, run_id: str, name: str, data: Any) -> Path:
        """Save a JSON artifact to a specific run."""
        artifact_dir = self.get_run_dir(run_id) / "artifacts"
        artifact_dir.mkdir(exist_ok=True)
        path = artifact_dir / f"{name}.json"
        with open(path, "w") as f:
            json.dump(_json_safe(data), f, indent=2, cls=ResultEncoder)
        logger.info(f"Saved artifact {name} for run {run_id}")
        return path

    def load_artifact(self, run_id: str, name: str) -> Optional[Dict[str, Any]]:
        path = self.get_run_dir(run_id) / "artifacts" / f"{name}.json"
        if not path.exists():
            return None
        with open(path, "r") as f:
            return json.load(f)

    def get_run_metadata(self, run_id: str) -> Optional[Dict[str, Any]]:
        metadata_path = self.base_dir / run_id / "metadata.json"
        if not metadata_path.exists():
            return None
        with open(metadata_path, "r") as f:
            return json.load(f)

    def delete_run(self, run_id: str) -> None:
        """Delete a run and drop it from the index."""
        run_dir = self.base_dir / run_id
        if run_dir.exists():
            shutil.rmtree(run_dir)
        if self.index["runs"].pop(run_id, None) is not None:
            self._save_index()

    def list_runs(self) -> List[Dict[str, Any]]:
        """List all runs, newest first."""
        runs = []
        for run_dir in self.base_dir.iterdir():
            metadata_path = run_dir / "metadata.json"
            if run_dir.is_dir() and metadata_path.exists():
                with open(metadata_path, "r") as f:
                    runs.append(json.load(f))
        return sorted(runs, key=lambda x: x.get("start_time", ""), reverse=True)

    def update_run_status(self, run_id: str, status: str,
                          details: Optional[Dict[str, Any]] = None) -> None:
        metadata_file = self.get_run_dir(run_id) / "metadata.json"
        with open(metadata_file, "r") as f:
            metadata = json.load(f)

        metadata["status"] = status
        metadata["updated_at"] = datetime.now().isoformat()
        if details:
            metadata.update(details)

        with open(metadata_file, "w") as f:
            json.dump(_json_safe(metadata), f, indent=2, cls=ResultEncoder)

        self.index["runs"][run_id]["status"] = status
        self._save_index()
        logger.info(f"Updated run {run_id} status to {status}")

    def save_error(self, run_id: str, error: Exception,
                   context: Optional[Dict[str, Any]] = None) -> None:
        """Record an error in the run metadata."""
        metadata_file = self.get_run_dir(run_id) / "metadata.json"
        with open(metadata_file, "r") as f:
            metadata = json.load(f)
        metadata.setdefault("errors", []).append({
            "timestamp": datetime.now().isoformat(),
            "error_type": type(error).__name__,
            "error_message": str(error),
            "context": context or {},
        })
        with open(metadata_file, "w") as f:
            json.dump(_json_safe(metadata), f, indent=2, cls=ResultEncoder)
        logger.error(f"Saved error for run {run_id}: {error}")

    def _save_metadata(self, metadata: Dict[str, Any]) -> None:
        if not self.current_run_dir:
            return
        with open(self.current_run_dir / "metadata.json", "w") as f:
            json.dump(metadata, f, indent=2, cls=ResultEncoder)
