"""Curiosity-era fine-tuning: the explorer is penalised by scorer confidence, perception learns from what it finds."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from prior_engine.compute.trajectory import Trajectory
from prior_engine.errors import DatasetError, TaskSpecError
from prior_engine.explorer.episode import CuriosityFn, Rollout
from prior_engine.explorer.tasks import TaskSample
from prior_engine.explorer.trainer import ExplorerTrainer
from prior_engine.perception.bundle import PerceptionBundle
from prior_engine.perception.data import CloudCache, PerceptionSample, sample_from_record
from prior_engine.perception.negatives import generate_negative
from prior_engine.perception.training import train_actionability, train_proposal, train_scorer
from prior_engine.schemas.records import InteractionRecord
from prior_engine.utils.seeding import derive_seed

log = logging.getLogger("prior_engine.perception")


def curiosity_score_fn(bundle: PerceptionBundle, sample: TaskSample) -> CuriosityFn:
    """Scorer confidence r for trajectories executed from this task's contact point."""
    points = sample.cloud.points
    theta = float(sample.task.theta)

    def score(trajectory: Trajectory) -> float:
        return float(bundle.score_trajectories(points, sample.point_index, theta, [trajectory])[0])

    return score


def stratified_positives(confidences: np.ndarray, seed: int) -> np.ndarray:
    """Indices split fifty-fifty between scorer confidence > 0.5 and < 0.5.

    When one stratum is empty the other is returned whole.
    """
    confidences = np.asarray(confidences, dtype=np.float64)
    rng = np.random.default_rng(seed)
    high = rng.permutation(np.flatnonzero(confidences > 0.5))
    low = rng.permutation(np.flatnonzero(confidences < 0.5))
    if high.size == 0 or low.size == 0:
        log.warning("curiosity_strata_unbalanced high=%d low=%d", high.size, low.size)
        return np.sort(np.concatenate([high, low]))
    n = min(high.size, low.size)
    return np.sort(np.concatenate([high[:n], low[:n]]))


@dataclass
class CuriosityEpoch:
    epoch: int
    phase: str  # "rl" | "perception"
    episodes: int = 0
    success_rate: float = 0.0
    new_positives: int = 0
    high_confidence: int = 0
    low_confidence: int = 0
    pool_size: int = 0
    scorer_loss: Optional[float] = None


@dataclass
class CuriosityReport:
    epochs: List[CuriosityEpoch] = field(default_factory=list)
    records: List[InteractionRecord] = field(default_factory=list)


def _collect_rl_epoch(trainer: ExplorerTrainer, bundle: PerceptionBundle, episodes: int, epoch: int,
                      curiosity: bool = True) -> Tuple[List[InteractionRecord], List[InteractionRecord], float]:
    successes: List[InteractionRecord] = []
    failures: List[InteractionRecord] = []

    def keep(ro: Rollout) -> None:
        if ro.record.success:
            successes.append(ro.record)
        elif ro.record.grasp_failed:
            failures.append(ro.record)

    if curiosity:
        trainer.curiosity_factory = lambda sample: curiosity_score_fn(bundle, sample)
    try:
        summary = trainer.train(episodes, epoch=epoch, on_rollout=keep)
    finally:
        trainer.curiosity_factory = None
    return successes, failures, summary.success_rate


def joint_curiosity_finetune(trainer: ExplorerTrainer, bundle: PerceptionBundle, epochs: int,
                             episodes_per_epoch: int, pool: Sequence[PerceptionSample] = (),
                             cache: Optional[CloudCache] = None, seed: int = 0,
                             curiosity: bool = True) -> CuriosityReport:
    """Odd epochs train the explorer with the curiosity penalty; even epochs train perception.

    Perception epochs draw the newly found successes fifty-fifty from the two scorer-confidence
    strata, add one negative per positive and train every head for one epoch on the mixed pool.
    With `curiosity=False` the same schedule runs without the penalty (ablation arm).
    """
    cache = cache or CloudCache(sim_cfg=trainer.cfg.sim)
    pool = list(pool)
    report = CuriosityReport()
    pending: List[InteractionRecord] = []
    failures: List[InteractionRecord] = []
    log.info("curiosity_start key=%s epochs=%d episodes_per_epoch=%d curiosity=%s seed=%d config_hash=%s",
             trainer.key, epochs, episodes_per_epoch, curiosity, seed, trainer.config_hash)

    for epoch in range(1, epochs + 1):
        if epoch % 2 == 1:
            found, failed, rate = _collect_rl_epoch(trainer, bundle, episodes_per_epoch, epoch, curiosity)
            pending.extend(found)
            failures.extend(failed)
            report.records.extend(found)
            report.epochs.append(CuriosityEpoch(epoch, "rl", episodes_per_epoch, rate, len(found)))
            log.info("curiosity_rl_epoch epoch=%d success_rate=%.3f new_positives=%d", epoch, rate, len(found))
            continue

        entry = CuriosityEpoch(epoch, "perception", pool_size=len(pool))
        if pending:
            positives = [sample_from_record(r, cache.points(r), 1.0) for r in pending]
            confidences = bundle.score_samples(positives)
            chosen = stratified_positives(confidences, derive_seed(seed, epoch))
            entry.high_confidence = int(np.sum(confidences[chosen] > 0.5))
            entry.low_confidence = int(np.sum(confidences[chosen] < 0.5))
            for n, i in enumerate(chosen):
                record = pending[i]
                try:
                    neg = generate_negative(record, derive_seed(seed, epoch, n), failures, bundle.cfg)
                except (DatasetError, TaskSpecError) as exc:
                    log.warning("curiosity_negative_skipped record_id=%s error=%s", record.record_id, exc)
                    continue
                pool.append(positives[i])
                pool.append(sample_from_record(neg.record, cache.points(neg.record), 0.0))
            entry.new_positives = len(chosen)
            pending = []
        entry.pool_size = len(pool)
        if len({s.label for s in pool}) == 2:
            s = derive_seed(seed, epoch, 1)
            entry.scorer_loss = train_scorer(bundle.scorer, pool, 1, bundle.cfg, s)[-1].loss
            positives_pool = [p for p in pool if p.label > 0.5]
            train_proposal(bundle.proposal, positives_pool, 1, bundle.cfg, s + 1)
            train_actionability(bundle.actionability, pool, bundle.proposal, bundle.scorer, 1, bundle.cfg, s + 2)
            bundle.eval()
        else:
            log.warning("curiosity_perception_skipped epoch=%d pool=%d reason=single_label", epoch, len(pool))
        report.epochs.append(entry)
        log.info("curiosity_perception_epoch epoch=%d pool=%d high=%d low=%d",
                 epoch, entry.pool_size, entry.high_confidence, entry.low_confidence)
    return report
