"""Flat-file persistence of runs and experiment summaries.

Layout written by :func:`write_summary`::

    <out>/summary.json          ExperimentSummary
    <out>/runs.csv              run_id,outcome,steps
    <out>/runs/run-0007.json    RunRecord
    <out>/runs/run-0007.jsonl   step log, one JSON object per time step

JSON is written with sorted keys and no timestamps so identical inputs give
byte-identical files.
"""
from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable

from .models import ExperimentSummary, RunRecord

__all__ = ["write_json", "read_json", "write_step_log", "write_run", "write_summary"]

logger = logging.getLogger(__name__)


def write_json(payload: Dict[str, Any], path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path: Path | str) -> Dict[str, Any]:
    return json.loads(Path(path).read_text())


def write_step_log(record: RunRecord, path: Path | str) -> Path:
    """One JSON line per time step."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for step in record.steps:
            fh.write(json.dumps(step.to_dict(), sort_keys=True) + "\n")
    return path


def write_run(record: RunRecord, out_dir: Path | str, stem: str | None = None) -> Path:
    """Write ``<stem>.json`` and ``<stem>.jsonl``; return the JSON path."""
    out_dir = Path(out_dir)
    stem = stem or f"run-{record.run_id:04d}"
    path = write_json(record.to_dict(), out_dir / f"{stem}.json")
    write_step_log(record, out_dir / f"{stem}.jsonl")
    return path


def _write_runs_csv(records: Iterable[RunRecord], path: Path) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run_id", "outcome", "steps"])
        for r in records:
            writer.writerow([r.run_id, r.outcome.value, r.steps_taken])


def write_summary(
    summary: ExperimentSummary, out_dir: Path | str, *, persist_runs: bool = True
) -> Path:
    """Write the summary JSON, the per-run CSV and (optionally) every run."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = write_json(summary.to_dict(), out_dir / "summary.json")
    _write_runs_csv(summary.records, out_dir / "runs.csv")
    if persist_runs:
        for record in summary.records:
            write_run(record, out_dir / "runs")
    logger.info("Wrote %d run(s) to %s", summary.runs, out_dir)
    return path
