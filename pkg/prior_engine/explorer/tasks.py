"""Training-task sampling: category, shape, task value, start pose, view and contact."""
from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from prior_engine.config import Settings, settings
from prior_engine.errors import DatasetError, TaskSpecError
from prior_engine.schemas.task import CameraView, TaskSpec
from prior_engine.sim.camera import sample_camera
from prior_engine.sim.engine import ContactSite, motion_direction, contact_from_cloud
from prior_engine.sim.render import PointCloud, render_pointcloud
from prior_engine.sim.shapes import ArticulatedObject
from prior_engine.utils.seeding import SeedLike, make_rng

log = logging.getLogger("prior_engine.explorer")

# minimum |cos| between contact normal and surface motion for a push to transmit
_PUSH_ALIGNMENT = 0.1


@dataclass(eq=False)
class TaskSample:
    obj: ArticulatedObject
    camera: CameraView
    cloud: PointCloud
    point_index: int
    contact: ContactSite
    task: TaskSpec
    start_q: float
    cloud_seed: int = 0


def group_by_category(fleet: Sequence[ArticulatedObject]) -> Dict[str, List[ArticulatedObject]]:
    groups: Dict[str, List[ArticulatedObject]] = defaultdict(list)
    for obj in fleet:
        groups[obj.category_key].append(obj)
    return dict(sorted(groups.items()))


def pick_shape(fleet: Sequence[ArticulatedObject], rng: np.random.Generator) -> ArticulatedObject:
    """Uniform category, then uniform shape within it."""
    if not fleet:
        raise DatasetError("cannot sample a task from an empty fleet")
    groups = group_by_category(fleet)
    keys = list(groups)
    members = groups[keys[int(rng.integers(len(keys)))]]
    return members[int(rng.integers(len(members)))]


def task_range(joint_type: str, cfg: Optional[Settings] = None):
    cfg = cfg or settings
    if joint_type == "revolute":
        lo, hi = cfg.explorer.revolute_task_range_deg
        return math.radians(lo), math.radians(hi)
    return tuple(cfg.explorer.prismatic_task_range)


def sample_theta(joint_type: str, interaction_type: str, rng: np.random.Generator,
                 cfg: Optional[Settings] = None) -> float:
    """Pull opens (theta > 0); a drawer push closes; a door push takes a random sign."""
    lo, hi = task_range(joint_type, cfg)
    magnitude = float(rng.uniform(lo, hi))
    if interaction_type == "pull":
        return magnitude
    if joint_type == "prismatic":
        return -magnitude
    return magnitude if rng.random() < 0.5 else -magnitude


def push_compatible(obj: ArticulatedObject, cloud: PointCloud, theta: float) -> np.ndarray:
    """Mask of movable points whose inward push moves the joint in theta's direction."""
    mask = cloud.part_mask.copy()
    for i in np.flatnonzero(mask):
        direction, speed = motion_direction(obj, cloud.points[i])
        if speed == 0.0:
            mask[i] = False
            continue
        # surface velocity for increasing q, against the inward normal
        align = float(np.dot(direction, -cloud.normals[i]))
        mask[i] = align * math.copysign(1.0, theta) > _PUSH_ALIGNMENT
    return mask


def sample_training_task(fleet: Sequence[ArticulatedObject], seed: SeedLike, interaction_type: str,
                         cfg: Optional[Settings] = None, max_tries: int = 50) -> TaskSample:
    cfg = cfg or settings
    rng = make_rng(seed)
    for _ in range(max_tries):
        obj = pick_shape(fleet, rng)
        theta = sample_theta(obj.joint_type, interaction_type, rng, cfg)
        try:
            lo, hi = obj.feasible_start_interval(theta)
        except TaskSpecError:
            continue
        start_q = float(rng.uniform(lo, hi))
        view = sample_camera(rng, cfg.sim)
        cloud_seed = int(rng.integers(2**31))
        cloud = render_pointcloud(obj, start_q, view, cfg.sim.n_points, seed=cloud_seed, sim_cfg=cfg.sim)
        mask = push_compatible(obj, cloud, theta) if interaction_type == "push" else cloud.part_mask
        candidates = np.flatnonzero(mask)
        if candidates.size == 0:
            continue
        index = int(candidates[int(rng.integers(candidates.size))])
        return TaskSample(
            obj=obj,
            camera=view,
            cloud=cloud,
            point_index=index,
            contact=contact_from_cloud(obj, cloud, index),
            task=TaskSpec(theta=theta, interaction_type=interaction_type, tolerance=cfg.sim.success_tolerance),
            start_q=start_q,
            cloud_seed=cloud_seed,
        )
    raise DatasetError(f"no feasible training task found in {max_tries} tries")
