"""Append-only JSON-lines store for training pairs, one shard per worker."""
from __future__ import annotations

import logging
import threading
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Iterator, List, Optional, Type, TypeVar

from pydantic import BaseModel, ValidationError

from prior_engine.errors import DatasetError
from prior_engine.schemas.records import TrainingPair

log = logging.getLogger("prior_engine.datakit")

M = TypeVar("M", bound=BaseModel)


def split_slug(split: str) -> str:
    return split.replace("/", "__")


def append_jsonl(path: str | Path, item: BaseModel) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as f:
        f.write(item.model_dump_json() + "\n")


def iter_jsonl(path: str | Path, model: Type[M]) -> Iterator[M]:
    with open(path, "r", encoding="utf-8") as f:
        for n, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield model.model_validate_json(line)
            except ValidationError as exc:
                raise DatasetError(f"{path}:{n} is not a valid {model.__name__}: {exc}") from exc


def read_pairs(path: str | Path) -> List[TrainingPair]:
    return list(iter_jsonl(path, TrainingPair))


def write_pairs(path: str | Path, pairs: Iterable[TrainingPair]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for pair in pairs:
            f.write(pair.model_dump_json() + "\n")
    return path


class RecordStore:
    """Workers append to `shards/<name>-w<k>.jsonl`; `finalize` merges shards in worker order or by `sort_key`."""

    def __init__(self, root: str | Path, name: str):
        self.root = Path(root)
        self.name = name
        self._locks: Dict[int, threading.Lock] = {}
        self._guard = threading.Lock()

    @property
    def shard_dir(self) -> Path:
        return self.root / "shards"

    @property
    def final_path(self) -> Path:
        return self.root / f"{self.name}.jsonl"

    def shard_path(self, worker: int) -> Path:
        return self.shard_dir / f"{self.name}-w{worker:03d}.jsonl"

    def _lock(self, worker: int) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(worker, threading.Lock())

    def append(self, pair: TrainingPair, worker: int = 0) -> None:
        with self._lock(worker):
            append_jsonl(self.shard_path(worker), pair)

    def reset(self) -> None:
        for shard in self.shard_dir.glob(f"{self.name}-w*.jsonl"):
            shard.unlink()
        if self.final_path.exists():
            self.final_path.unlink()

    def finalize(self, sort_key: Optional[Callable[[TrainingPair], Any]] = None) -> Path:
        shards = sorted(self.shard_dir.glob(f"{self.name}-w*.jsonl"))
        if not shards:
            raise DatasetError(f"no shards to finalize for {self.name}")
        if sort_key is not None:
            merged = sorted((p for shard in shards for p in read_pairs(shard)), key=sort_key)
            write_pairs(self.final_path, merged)
        else:
            self.final_path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.final_path, "w", encoding="utf-8") as out:
                for shard in shards:
                    out.write(shard.read_text(encoding="utf-8"))
        for shard in shards:
            shard.unlink()
        log.info("records_finalized name=%s shards=%d path=%s", self.name, len(shards), self.final_path)
        return self.final_path
