from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, Sequence

import numpy as np
from pydantic import BaseModel, Field

from prior_engine.errors import MetricError


class ConfusionCounts(BaseModel):
    tp: int = Field(default=0, ge=0)
    fp: int = Field(default=0, ge=0)
    tn: int = Field(default=0, ge=0)
    fn: int = Field(default=0, ge=0)

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(tp=self.tp + other.tp, fp=self.fp + other.fp,
                               tn=self.tn + other.tn, fn=self.fn + other.fn)


@dataclass(frozen=True)
class ClassificationMetrics:
    accuracy: float
    precision: float
    recall: float
    fscore: float

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


def confusion_from_scores(scores: Sequence[float], labels: Sequence[float], threshold: float = 0.5) -> ConfusionCounts:
    pred = np.asarray(scores, dtype=np.float64) > threshold
    truth = np.asarray(labels, dtype=np.float64) > 0.5
    return ConfusionCounts(
        tp=int(np.sum(pred & truth)),
        fp=int(np.sum(pred & ~truth)),
        tn=int(np.sum(~pred & ~truth)),
        fn=int(np.sum(~pred & truth)),
    )


def classification_metrics(counts: ConfusionCounts) -> ClassificationMetrics:
    """Balanced accuracy (mean of positive and negative recall), precision, recall and F-score."""
    if counts.tp + counts.fn == 0:
        raise MetricError("recall undefined: no positive samples", term="recall")
    if counts.tn + counts.fp == 0:
        raise MetricError("negative recall undefined: no negative samples", term="negative_recall")
    if counts.tp + counts.fp == 0:
        raise MetricError("precision undefined: nothing predicted positive", term="precision")
    precision = counts.tp / (counts.tp + counts.fp)
    recall = counts.tp / (counts.tp + counts.fn)
    accuracy = 0.5 * (recall + counts.tn / (counts.tn + counts.fp))
    if precision + recall == 0:
        raise MetricError("F-score undefined: precision and recall are both zero", term="fscore")
    fscore = 2 * precision * recall / (precision + recall)
    return ClassificationMetrics(accuracy, precision, recall, fscore)
