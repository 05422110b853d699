"""Downstream manipulation: pick a contact, propose, execute the best-scored trajectory."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Protocol, Sequence

import numpy as np

from prior_engine.compute.trajectory import Trajectory
from prior_engine.config import Settings, settings
from prior_engine.explorer.tasks import TaskSample, sample_training_task
from prior_engine.perception.bundle import sample_contact
from prior_engine.sim.engine import check_success, contact_from_cloud, replay_trajectory
from prior_engine.sim.shapes import ArticulatedObject
from prior_engine.utils.seeding import derive_seed

log = logging.getLogger("prior_engine.eval")


class Prior(Protocol):
    """What downstream evaluation needs from a trained bundle."""

    def actionability_map(self, points, theta: float) -> np.ndarray: ...

    def propose(self, points, point_index: int, theta: float, k: int, seed: int) -> List[Trajectory]: ...

    def score_trajectories(self, points, point_index: int, theta: float,
                           trajectories: Sequence[Trajectory]) -> np.ndarray: ...


@dataclass
class TaskOutcome:
    object_id: str
    theta: float
    point_index: int
    achieved: float
    success: bool


@dataclass
class DownstreamResult:
    success_rate: float  # percent
    outcomes: List[TaskOutcome] = field(default_factory=list)

    @property
    def n_tasks(self) -> int:
        return len(self.outcomes)


def make_eval_tasks(fleet: Sequence[ArticulatedObject], n: int, seed: int, interaction_type: str,
                    cfg: Optional[Settings] = None) -> List[TaskSample]:
    cfg = cfg or settings
    return [sample_training_task(fleet, derive_seed(seed, i), interaction_type, cfg) for i in range(n)]


def execute(task: TaskSample, point_index: int, trajectory: Trajectory, cfg: Optional[Settings] = None) -> TaskOutcome:
    cfg = cfg or settings
    contact = contact_from_cloud(task.obj, task.cloud, point_index)
    achieved = replay_trajectory(task.obj, task.task, contact, task.start_q, trajectory, cfg.sim)
    return TaskOutcome(task.obj.object_id, float(task.task.theta), point_index, achieved,
                       check_success(task.task, achieved))


def _rate(outcomes: Sequence[TaskOutcome]) -> float:
    return 100.0 * float(np.mean([o.success for o in outcomes])) if outcomes else 0.0


def downstream_success(prior: Prior, tasks: Sequence[TaskSample], seed: int = 0, proposals: Optional[int] = None,
                       cfg: Optional[Settings] = None) -> DownstreamResult:
    """Best-actionability movable point, `proposals` proposals there, execute the top-scored one."""
    cfg = cfg or settings
    k = proposals or cfg.evaluation.proposals
    outcomes = []
    for i, task in enumerate(tasks):
        points = task.cloud.points
        theta = float(task.task.theta)
        scores = prior.actionability_map(points, theta)
        idx = sample_contact(scores, cfg.perception.contact_mode, derive_seed(seed, i, 0), mask=task.cloud.part_mask)
        candidates = prior.propose(points, idx, theta, k, derive_seed(seed, i, 1))
        ratings = prior.score_trajectories(points, idx, theta, candidates)
        outcomes.append(execute(task, idx, candidates[int(np.argmax(ratings))], cfg))
    result = DownstreamResult(_rate(outcomes), outcomes)
    log.info("downstream_done tasks=%d success_rate=%.2f seed=%d", result.n_tasks, result.success_rate, seed)
    return result


def random_control_success(prior: Prior, tasks: Sequence[TaskSample], seed: int = 0,
                           cfg: Optional[Settings] = None) -> DownstreamResult:
    """Uniform movable-part contact and a single unscored proposal."""
    cfg = cfg or settings
    outcomes = []
    for i, task in enumerate(tasks):
        rng = np.random.default_rng(derive_seed(seed, i, 2))
        movable = np.flatnonzero(task.cloud.part_mask)
        idx = int(movable[int(rng.integers(movable.size))])
        candidate = prior.propose(task.cloud.points, idx, float(task.task.theta), 1, derive_seed(seed, i, 3))[0]
        outcomes.append(execute(task, idx, candidate, cfg))
    result = DownstreamResult(_rate(outcomes), outcomes)
    log.info("random_control_done tasks=%d success_rate=%.2f seed=%d", result.n_tasks, result.success_rate, seed)
    return result
