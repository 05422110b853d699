"""Dataset collection from a trained explorer: positives, matched negatives, clouds and a manifest."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from prior_engine.errors import DatasetError, TaskSpecError
from prior_engine.explorer.episode import Rollout
from prior_engine.explorer.td3 import PolicyFn
from prior_engine.explorer.trainer import ExplorerTrainer
from prior_engine.perception.negatives import generate_negative, positive_pair
from prior_engine.schemas.manifest import DatasetManifest
from prior_engine.schemas.records import InteractionRecord, TrainingPair
from prior_engine.storage.manifests import build_manifest, save_manifest
from prior_engine.storage.ply import write_cloud_ply
from prior_engine.storage.records import RecordStore, split_slug
from prior_engine.utils.seeding import derive_seed

log = logging.getLogger("prior_engine.datakit")


def noisy_policy(base: PolicyFn, noise: float, seed: int) -> PolicyFn:
    """Per-episode Gaussian action noise on a frozen policy."""
    rng = np.random.default_rng(seed)

    def _fn(state: np.ndarray) -> np.ndarray:
        a = np.asarray(base(state), dtype=np.float64)
        if noise > 0:
            a = a + rng.normal(0.0, noise, size=a.shape)
        return np.clip(a, -1.0, 1.0)

    return _fn


def _episode(trainer: ExplorerTrainer, base: PolicyFn, seed: int, i: int, epoch: int) -> Rollout:
    ep_seed = derive_seed(seed, 0, i)
    policy = noisy_policy(base, trainer.cfg.data.collect_noise, derive_seed(seed, 2, i))
    return trainer.collect(ep_seed, epoch=epoch, policy=policy)


def _write_cloud(root: Path, ro: Rollout, config_hash: str) -> InteractionRecord:
    rel = f"clouds/{ro.record.record_id}.ply"
    write_cloud_ply(root / rel, ro.sample.cloud, comments={
        "object_id": ro.record.object_id, "config_hash": config_hash, "cloud_seed": str(ro.record.cloud_seed),
    })
    return ro.record.model_copy(update={"cloud_ref": rel})


def gather_rollouts(trainer: ExplorerTrainer, n_pos: int, seed: int, workers: int = 1,
                    epoch: int = 0) -> Tuple[List[Rollout], List[Rollout], int]:
    """Run episodes in rounds of `workers` until `n_pos` successes; returns (successes, grasp failures, attempts)."""
    cfg = trainer.cfg.data
    check_at = cfg.attempts_factor * n_pos
    hard_cap = max(check_at, int(math.ceil(n_pos / max(cfg.success_floor, 1e-9))))
    base = trainer.agent.frozen_policy()
    successes: List[Rollout] = []
    failures: List[Rollout] = []
    attempts = 0
    with ThreadPoolExecutor(max_workers=workers) as pool:
        while len(successes) < n_pos:
            if attempts >= hard_cap:
                raise DatasetError(
                    f"collection stalled: {len(successes)}/{n_pos} successes after {attempts} attempts"
                )
            batch = list(pool.map(lambda i: _episode(trainer, base, seed, i, epoch),
                                  range(attempts, attempts + workers)))
            for ro in batch:
                attempts += 1
                if ro.record.success and len(successes) < n_pos:
                    successes.append(ro)
                elif ro.record.grasp_failed and len(successes) < n_pos:
                    failures.append(ro)
                if attempts == check_at:
                    rate = len(successes) / attempts
                    if rate < cfg.success_floor and len(successes) < n_pos:
                        raise DatasetError(
                            f"success rate {rate:.4f} over {attempts} attempts is below the floor "
                            f"{cfg.success_floor}; policy {trainer.key} is not ready for collection"
                        )
    return successes, failures, attempts


def collect_dataset(trainer: ExplorerTrainer, n_pos: int, seed: int, root: str | Path,
                    split: str = "train-cat/train-shape", workers: Optional[int] = None,
                    epoch: int = 0) -> DatasetManifest:
    """n_pos successful explorer episodes plus n_pos negatives, written as JSON lines with PLY clouds."""
    root = Path(root)
    workers = workers or trainer.cfg.data.workers
    log.info("collect_start key=%s n_pos=%d seed=%d workers=%d config_hash=%s",
             trainer.key, n_pos, seed, workers, trainer.config_hash)
    successes, failures, attempts = gather_rollouts(trainer, n_pos, seed, workers, epoch)

    failure_records = [_write_cloud(root, ro, trainer.config_hash) for ro in failures]
    store = RecordStore(root, f"pairs-{split_slug(split)}")
    store.reset()
    # merged order: episode index, then positive before negative
    order: Dict[str, Tuple[int, int]] = {ro.record.record_id: (i, 0) for i, ro in enumerate(successes)}

    def emit(worker: int) -> None:
        for i in range(worker, len(successes), workers):
            record = _write_cloud(root, successes[i], trainer.config_hash)
            store.append(positive_pair(record), worker)
            try:
                neg: TrainingPair = generate_negative(record, derive_seed(seed, 1, i), failure_records,
                                                      trainer.cfg.perception)
            except TaskSpecError as exc:
                raise DatasetError(f"negative generation failed for {record.record_id}: {exc}") from exc
            order.setdefault(neg.record.record_id, (i, 1))
            store.append(neg, worker)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(emit, range(workers)))

    path = store.finalize(sort_key=lambda p: (*order[p.record.record_id], p.record.record_id))
    manifest = build_manifest(root, [path], split, trainer.config_hash, seed)
    save_manifest(manifest, root / f"manifest-{split_slug(split)}.json")
    log.info("collect_done key=%s attempts=%d success_rate=%.4f counts=%s",
             trainer.key, attempts, len(successes) / max(1, attempts), manifest.counts)
    return manifest
