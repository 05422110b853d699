"""Negative training pairs: task-offset relabels and grasp-failure replays."""
from __future__ import annotations

import math
from typing import Optional, Sequence, Tuple

from prior_engine.config import PerceptionSettings, settings
from prior_engine.errors import DatasetError, PreconditionError
from prior_engine.schemas.records import InteractionRecord, TrainingPair
from prior_engine.sim.engine import check_success
from prior_engine.utils.hashing import sha256_inputs
from prior_engine.utils.seeding import SeedLike, make_rng


def offset_range(theta: float, joint_type: str, cfg: Optional[PerceptionSettings] = None) -> Tuple[float, float]:
    """Magnitude range [floor_frac * |theta|, cap] for task-offset negatives."""
    cfg = cfg or settings.perception
    cap = math.radians(cfg.revolute_offset_cap_deg) if joint_type == "revolute" else cfg.prismatic_offset_cap
    floor = cfg.offset_floor_frac * abs(theta)
    if floor > cap:
        raise DatasetError(f"offset range empty: floor {floor:.4f} exceeds cap {cap:.4f}")
    return floor, cap


def _negative(record: InteractionRecord, update: dict) -> InteractionRecord:
    neg = record.model_copy(update={**update, "success": False})
    return neg.model_copy(update={"record_id": sha256_inputs(neg.model_dump(mode="json", exclude={"record_id"}))[:16]})


def task_offset_negative(record: InteractionRecord, seed: SeedLike,
                         cfg: Optional[PerceptionSettings] = None, max_tries: int = 100) -> TrainingPair:
    if not record.success:
        raise PreconditionError("task-offset negatives start from a successful record")
    rng = make_rng(seed)
    theta = float(record.task.theta)
    lo, hi = offset_range(theta, record.shape.joint.type, cfg)
    new_theta = None
    for _ in range(max_tries):
        candidate = theta + float(rng.choice([-1.0, 1.0])) * float(rng.uniform(lo, hi))
        if abs(candidate) < 1e-9:
            continue
        if not check_success(record.task.with_theta(candidate), record.achieved):
            new_theta = candidate
            break
    if new_theta is None:
        raise DatasetError(
            f"no task-offset candidate fails for record {record.record_id} after {max_tries} draws "
            f"in [{lo:.4f}, {hi:.4f}]"
        )
    neg = _negative(record, {"task": record.task.with_theta(new_theta)})
    return TrainingPair(record=neg, label="negative", negative_kind="task-offset")


def grasp_failure_negative(failure: InteractionRecord) -> TrainingPair:
    if not failure.grasp_failed:
        raise PreconditionError("grasp-failure negatives need a record whose grasp failed")
    return TrainingPair(record=_negative(failure, {}), label="negative", negative_kind="grasp-failure")


def generate_negative(record: InteractionRecord, seed: SeedLike,
                      grasp_failures: Sequence[InteractionRecord] = (),
                      cfg: Optional[PerceptionSettings] = None) -> TrainingPair:
    """Pull tasks draw a grasp-failure replay with probability `grasp_failure_ratio` when any exist."""
    cfg = cfg or settings.perception
    rng = make_rng(seed)
    if record.task.interaction_type == "pull" and grasp_failures and rng.random() < cfg.grasp_failure_ratio:
        return grasp_failure_negative(grasp_failures[int(rng.integers(len(grasp_failures)))])
    return task_offset_negative(record, rng, cfg)


def positive_pair(record: InteractionRecord) -> TrainingPair:
    if not record.success:
        raise PreconditionError("positive pairs need a successful record")
    return TrainingPair(record=record, label="positive", negative_kind="none")
