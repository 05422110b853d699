"""Scorer classification metrics and proposal coverage on held-out records."""
from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from prior_engine.compute.trajectory import Trajectory, deserialize_trajectory
from prior_engine.config import Settings, settings
from prior_engine.errors import MetricError
from prior_engine.evaluation.metrics import classification_metrics, confusion_from_scores
from prior_engine.evaluation.trajectories import coverage
from prior_engine.perception.bundle import PerceptionBundle
from prior_engine.perception.data import CloudCache, PerceptionSample, samples_from_pairs
from prior_engine.schemas.records import TrainingPair
from prior_engine.utils.seeding import derive_seed

log = logging.getLogger("prior_engine.eval")

PRIORS_COLUMNS = ("accuracy", "precision", "recall", "fscore", "coverage")


@dataclass
class PriorsRow:
    """Percentages averaged over evaluation runs."""

    accuracy: float
    precision: float
    recall: float
    fscore: float
    coverage: float
    runs: int = 1
    per_run: List[Dict[str, float]] = field(default_factory=list)

    def as_row(self) -> Dict[str, float]:
        return {k: getattr(self, k) for k in PRIORS_COLUMNS}

    def to_doc(self) -> Dict:
        return asdict(self)


def balanced_subset(pairs: Sequence[TrainingPair], n_pos: int, n_neg: int, seed: int) -> List[TrainingPair]:
    rng = np.random.default_rng(seed)
    pos = [p for p in pairs if p.label == "positive"]
    neg = [p for p in pairs if p.label == "negative"]
    take_pos = [pos[i] for i in sorted(rng.permutation(len(pos))[:n_pos])]
    take_neg = [neg[i] for i in sorted(rng.permutation(len(neg))[:n_neg])]
    return take_pos + take_neg


def metric_percentages(scores: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> Dict[str, float]:
    """Classification metrics in percent; undefined precision/F-score become NaN."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    try:
        m = classification_metrics(confusion_from_scores(scores, labels, threshold)).as_dict()
    except MetricError as exc:
        if exc.term not in ("precision", "fscore"):
            raise
        log.warning("priors_metric_undefined term=%s", exc.term)
        recall = float(np.mean(scores[labels > 0.5] > threshold))
        neg_recall = float(np.mean(scores[labels <= 0.5] <= threshold))
        m = {"accuracy": 0.5 * (recall + neg_recall), "precision": math.nan, "recall": recall,
             "fscore": math.nan}
    return {k: 100.0 * v for k, v in m.items()}


def _as_trajectory(sample: PerceptionSample) -> Trajectory:
    return deserialize_trajectory(sample.trajectory.astype(np.float64), sample.interaction_type)


def proposal_coverage(bundle: PerceptionBundle, samples: Sequence[PerceptionSample], proposals: int, seed: int,
                      threshold: float = 10.0) -> float:
    """Coverage of positive trajectories by per-(shape, point, task) pools of proposals."""
    groups: Dict[Tuple, List[PerceptionSample]] = defaultdict(list)
    for s in samples:
        if s.label > 0.5:
            groups[(s.cloud_key, s.point_index, round(s.theta, 9))].append(s)
    if not groups:
        raise MetricError("coverage undefined without positive trajectories", term="gt")
    covered = 0.0
    total = 0
    for n, members in enumerate(groups.values()):
        head = members[0]
        pred = bundle.propose(head.points, head.point_index, head.theta, proposals, derive_seed(seed, n))
        covered += coverage([_as_trajectory(s) for s in members], pred, threshold) * len(members)
        total += len(members)
    return covered / total


def eval_priors(bundle: PerceptionBundle, pairs: Sequence[TrainingPair], cache: CloudCache, seed: int = 0,
                cfg: Optional[Settings] = None) -> PriorsRow:
    """Balanced draws of held-out pairs, scorer thresholded, plus proposal coverage; averaged over runs."""
    cfg = cfg or settings
    ev = cfg.evaluation
    bundle.eval()
    runs: List[Dict[str, float]] = []
    for run in range(ev.runs):
        subset = balanced_subset(pairs, ev.n_positive, ev.n_negative, derive_seed(seed, run))
        samples = samples_from_pairs(subset, cache)
        scores = bundle.score_samples(samples)
        labels = np.array([s.label for s in samples])
        row = metric_percentages(scores, labels, ev.score_threshold)
        row["coverage"] = proposal_coverage(bundle, samples, ev.proposals, derive_seed(seed, run, 1),
                                            ev.coverage_threshold)
        runs.append(row)
        log.info("priors_run run=%d accuracy=%.2f fscore=%.2f coverage=%.2f",
                 run, row["accuracy"], row["fscore"], row["coverage"])
    mean = {k: float(np.nanmean([r[k] for r in runs])) if any(not math.isnan(r[k]) for r in runs) else math.nan
            for k in PRIORS_COLUMNS}
    return PriorsRow(**mean, runs=len(runs), per_run=runs)
