"""Result tables (CSV) and run files (JSON) for prior and downstream evaluation."""
from __future__ import annotations

from pathlib import Path
from typing import Dict, Mapping, Sequence

from prior_engine.evaluation.downstream import DownstreamResult
from prior_engine.evaluation.priors import PRIORS_COLUMNS, PriorsRow
from prior_engine.storage.tables import write_rows_csv, write_run_json

PRIORS_TABLE = ("setting", "split") + PRIORS_COLUMNS
DOWNSTREAM_TABLE = ("method", "setting", "split", "tasks", "success_rate")


def priors_table_row(setting: str, split: str, row: PriorsRow) -> Dict:
    return {"setting": setting, "split": split, **{k: round(v, 2) for k, v in row.as_row().items()}}


def downstream_table_row(method: str, setting: str, split: str, result: DownstreamResult) -> Dict:
    return {"method": method, "setting": setting, "split": split, "tasks": result.n_tasks,
            "success_rate": round(result.success_rate, 2)}


def write_priors_table(path: str | Path, rows: Sequence[Mapping]) -> Path:
    return write_rows_csv(path, rows, PRIORS_TABLE)


def write_downstream_table(path: str | Path, rows: Sequence[Mapping]) -> Path:
    return write_rows_csv(path, rows, DOWNSTREAM_TABLE)


def write_eval_run(path: str | Path, kind: str, seed: int, config_hash: str, results: Mapping) -> Path:
    return write_run_json(path, {"kind": kind, "seed": seed, "config_hash": config_hash, "results": results})
