"""Trajectory distance, proposal coverage and proposal diversity."""
from __future__ import annotations

from itertools import combinations
from typing import Sequence

import numpy as np

from prior_engine.compute.trajectory import Trajectory, absolute_slots
from prior_engine.errors import MetricError

POSITION_WEIGHT = 5.0


def trajectory_distance(a: Trajectory, b: Trajectory) -> float:
    """5 * position L1 + 6D orientation L1, summed over the five absolute slots."""
    pa, ra = absolute_slots(a)
    pb, rb = absolute_slots(b)
    return float(POSITION_WEIGHT * np.abs(pa - pb).sum() + np.abs(ra - rb).sum())


def distance_matrix(gt: Sequence[Trajectory], pred: Sequence[Trajectory]) -> np.ndarray:
    if not gt or not pred:
        return np.zeros((len(gt), len(pred)))
    gp, gr = zip(*(absolute_slots(t) for t in gt))
    pp, pr = zip(*(absolute_slots(t) for t in pred))
    gp, gr, pp, pr = (np.stack(x) for x in (gp, gr, pp, pr))
    d_pos = np.abs(gp[:, None] - pp[None]).sum(axis=(2, 3))
    d_ori = np.abs(gr[:, None] - pr[None]).sum(axis=(2, 3))
    return POSITION_WEIGHT * d_pos + d_ori


def coverage(gt: Sequence[Trajectory], pred: Sequence[Trajectory], threshold: float = 10.0) -> float:
    """Percentage of ground-truth trajectories whose nearest proposal lies strictly within `threshold`."""
    if not gt:
        raise MetricError("coverage undefined for an empty ground-truth set", term="gt")
    if not pred:
        raise MetricError("coverage undefined for an empty proposal set", term="pred")
    nearest = distance_matrix(gt, pred).min(axis=1)
    return 100.0 * float(np.mean(nearest < threshold))


def proposal_diversity(trajectories: Sequence[Trajectory]) -> float:
    """Mean pairwise trajectory distance; 0 for fewer than two trajectories."""
    if len(trajectories) < 2:
        return 0.0
    return float(np.mean([trajectory_distance(a, b) for a, b in combinations(trajectories, 2)]))
