from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from prior_engine.compute.rotations import frame_from_approach
from prior_engine.compute.trajectory import Trajectory, Waypoint
from prior_engine.config import Settings, settings
from prior_engine.errors import PreconditionError
from prior_engine.explorer.episode import make_record
from prior_engine.explorer.tasks import push_compatible
from prior_engine.schemas.records import InteractionRecord, StepDoc
from prior_engine.schemas.task import TaskSpec
from prior_engine.sim.camera import frontal_view
from prior_engine.sim.engine import (
    ContactSite,
    advance_gripper,
    contact_from_world,
    motion_direction,
    start_episode,
)
from prior_engine.sim.render import PointCloud, visible_surface
from prior_engine.sim.shapes import ArticulatedObject
from prior_engine.utils.seeding import SeedLike, make_rng

log = logging.getLogger("prior_engine.eval")

_REPEATS = 4
_FRONT_ALIGN = 0.9


@dataclass(eq=False)
class HeuristicPlan:
    method: str
    obj: ArticulatedObject
    task: TaskSpec
    start_q: float
    contact: ContactSite
    trajectory: Trajectory
    failure: Optional[str] = None


def _start_q(obj: ArticulatedObject, task: TaskSpec, rng: np.random.Generator, start_q: Optional[float]) -> float:
    if start_q is not None:
        return float(start_q)
    lo, hi = obj.feasible_start_interval(task.theta)
    return float(rng.uniform(lo, hi))


def _front_view_cloud(obj: ArticulatedObject, q: float, cfg: Settings) -> PointCloud:
    points, normals, box_idx = visible_surface(obj, q, frontal_view(30.0, cfg.sim))
    movable = np.array([b.movable for b in obj.boxes])
    handle = np.array([b.role == "handle" for b in obj.boxes])
    return PointCloud(points, normals, movable[box_idx], box_idx, handle[box_idx], frontal_view(30.0, cfg.sim), q)


def _pick(cloud: PointCloud, mask: np.ndarray, rng: np.random.Generator) -> Optional[int]:
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return None
    return int(idx[int(rng.integers(idx.size))])


def _push_frame(normal: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return frame_from_approach(-normal, float(rng.uniform(0.0, 2.0 * math.pi)))


def _first_box(obj: ArticulatedObject, role: str) -> int:
    for i, b in enumerate(obj.boxes):
        if b.role == role:
            return i
    raise PreconditionError(f"object {obj.object_id} has no {role}")


def _grip_box(obj: ArticulatedObject) -> int:
    """The bar or knob itself (first handle box); the rest are posts."""
    return _first_box(obj, "handle")


def front_center(obj: ArticulatedObject, q: float, box_index: int) -> ContactSite:
    """Centre of a movable box's front (+x local) face."""
    box = obj.boxes_at(q)[box_index]
    normal = box.rotation[:, 0]
    return contact_from_world(obj, box.center + box.half[0] * normal, normal, box_index, q)


def handle_midpoint(obj: ArticulatedObject, q: float) -> ContactSite:
    """Centre of the handle's front face."""
    return front_center(obj, q, _grip_box(obj))


def _grasp_frame(obj: ArticulatedObject, contact: ContactSite, q: float) -> np.ndarray:
    """Approach against the handle face with the fingers closing across its shortest side."""
    i = contact.box_index
    box = obj.boxes_at(q)[i]
    n = contact.normal(obj, q)
    side = 1 + int(np.argmin(box.half[1:]))
    closing = box.rotation[:, side]
    approach = -n
    return np.stack([approach, closing, np.cross(approach, closing)], axis=1)


def _failed_plan(method: str, obj: ArticulatedObject, task: TaskSpec, q0: float, reason: str,
                 rng: np.random.Generator, cfg: Settings) -> HeuristicPlan:
    cloud = _front_view_cloud(obj, q0, cfg)
    i = _pick(cloud, cloud.part_mask, rng)
    if i is None:
        raise PreconditionError(f"object {obj.object_id} shows no movable surface from the front")
    contact = contact_from_world(obj, cloud.points[i], cloud.normals[i], int(cloud.box_index[i]), q0)
    n = contact.normal(obj, q0)
    wp0 = Waypoint(contact.point(obj, q0) + cfg.sim.approach_offset * n, _push_frame(n, rng))
    return HeuristicPlan(method, obj, task, q0, contact, Trajectory((wp0,), task.interaction_type), reason)


def _straight(wp0: Waypoint, direction: np.ndarray, lead: float, step: float, count: int,
              interaction_type: str) -> Trajectory:
    wps = [wp0]
    for k in range(count):
        extra = lead if k == 0 else 0.0
        wps.append(Waypoint(wps[-1].position + (extra + step) * direction, wp0.orientation))
    return Trajectory(tuple(wps), interaction_type)


# -------------------------
# Doors
# -------------------------
def heuristic_door_push(obj: ArticulatedObject, task: TaskSpec, seed: SeedLike,
                        start_q: Optional[float] = None, cfg: Optional[Settings] = None) -> HeuristicPlan:
    """Four pushes along the current inward normal, each d * sin(theta / 4)."""
    cfg = cfg or settings
    if obj.joint_type != "revolute" or task.interaction_type != "push":
        raise PreconditionError("door push needs a revolute object and a push task")
    rng = make_rng(seed)
    q0 = _start_q(obj, task, rng, start_q)
    cloud = _front_view_cloud(obj, q0, cfg)
    i = _pick(cloud, push_compatible(obj, cloud, task.theta), rng)
    if i is None:
        return _failed_plan("door-push", obj, task, q0, "no push-compatible surface", rng, cfg)
    contact = contact_from_world(obj, cloud.points[i], cloud.normals[i], int(cloud.box_index[i]), q0)
    p = contact.point(obj, q0)
    d = float(np.linalg.norm(p - obj.axis_foot(p)))
    step = d * math.sin(abs(task.theta) / _REPEATS)
    n0 = contact.normal(obj, q0)
    wps = [Waypoint(p + cfg.sim.approach_offset * n0, _push_frame(n0, rng))]
    for k in range(_REPEATS):
        n = contact.normal(obj, q0 + k * task.theta / _REPEATS)
        lead = cfg.sim.approach_offset if k == 0 else 0.0
        wps.append(Waypoint(wps[-1].position - (lead + step) * n, wps[0].orientation))
    return HeuristicPlan("door-push", obj, task, q0, contact, Trajectory(tuple(wps), "push"))


def heuristic_door_pull(obj: ArticulatedObject, task: TaskSpec, seed: SeedLike,
                        start_q: Optional[float] = None, cfg: Optional[Settings] = None) -> HeuristicPlan:
    """Grasp on the handle, then four pulls of d * sin(theta / 4) along the handle's direction of travel."""
    cfg = cfg or settings
    if obj.joint_type != "revolute" or task.interaction_type != "pull":
        raise PreconditionError("door pull needs a revolute object and a pull task")
    rng = make_rng(seed)
    q0 = _start_q(obj, task, rng, start_q)
    if not obj.has_handle:
        return _failed_plan("door-pull", obj, task, q0, "no handle for pulling", rng, cfg)
    i = _grip_box(obj)
    box = obj.boxes_at(q0)[i]
    cloud = _front_view_cloud(obj, q0, cfg)
    front = (cloud.box_index == i) & (cloud.normals @ box.rotation[:, 0] > _FRONT_ALIGN)
    k = _pick(cloud, front, rng)
    contact = (handle_midpoint(obj, q0) if k is None else
               contact_from_world(obj, cloud.points[k], cloud.normals[k], i, q0))
    p = contact.point(obj, q0)
    d = float(np.linalg.norm(p - obj.axis_foot(p)))
    step = d * math.sin(abs(task.theta) / _REPEATS)
    sign = math.copysign(1.0, task.theta)
    wps = [Waypoint(p + cfg.sim.approach_offset * contact.normal(obj, q0), _grasp_frame(obj, contact, q0))]
    for j in range(_REPEATS):
        q_j = q0 + j * task.theta / _REPEATS
        direction, _ = motion_direction(obj, contact.point(obj, q_j))
        wps.append(Waypoint(wps[-1].position + sign * step * direction, wps[0].orientation))
    return HeuristicPlan("door-pull", obj, task, q0, contact, Trajectory(tuple(wps), "pull"))


# -------------------------
# Drawers
# -------------------------
def heuristic_drawer_push(obj: ArticulatedObject, task: TaskSpec, seed: SeedLike,
                          start_q: Optional[float] = None, cfg: Optional[Settings] = None) -> HeuristicPlan:
    """Front-face contact, then |t| along slide-to-close in four equal moves."""
    cfg = cfg or settings
    if obj.joint_type != "prismatic" or task.interaction_type != "push":
        raise PreconditionError("drawer push needs a prismatic object and a push task")
    rng = make_rng(seed)
    q0 = _start_q(obj, task, rng, start_q)
    cloud = _front_view_cloud(obj, q0, cfg)
    front = cloud.part_mask & (cloud.normals @ obj.joint_axis > _FRONT_ALIGN)
    i = _pick(cloud, front, rng)
    if i is None:
        contact = front_center(obj, q0, _first_box(obj, "panel"))
    else:
        contact = contact_from_world(obj, cloud.points[i], cloud.normals[i], int(cloud.box_index[i]), q0)
    n = contact.normal(obj, q0)
    wp0 = Waypoint(contact.point(obj, q0) + cfg.sim.approach_offset * n, _push_frame(n, rng))
    traj = _straight(wp0, -obj.joint_axis, cfg.sim.approach_offset, abs(task.theta) / _REPEATS, _REPEATS, "push")
    return HeuristicPlan("drawer-push", obj, task, q0, contact, traj)


def heuristic_drawer_pull(obj: ArticulatedObject, task: TaskSpec, seed: SeedLike,
                          start_q: Optional[float] = None, cfg: Optional[Settings] = None) -> HeuristicPlan:
    """Grasp the handle midpoint, then |t| along slide-to-open in four equal moves."""
    cfg = cfg or settings
    if obj.joint_type != "prismatic" or task.interaction_type != "pull":
        raise PreconditionError("drawer pull needs a prismatic object and a pull task")
    rng = make_rng(seed)
    q0 = _start_q(obj, task, rng, start_q)
    if not obj.has_handle:
        return _failed_plan("drawer-pull", obj, task, q0, "no handle for pulling", rng, cfg)
    contact = handle_midpoint(obj, q0)
    wp0 = Waypoint(contact.point(obj, q0) + cfg.sim.approach_offset * contact.normal(obj, q0),
                   _grasp_frame(obj, contact, q0))
    sign = math.copysign(1.0, task.theta)
    traj = _straight(wp0, sign * obj.joint_axis, 0.0, abs(task.theta) / _REPEATS, _REPEATS, "pull")
    return HeuristicPlan("drawer-pull", obj, task, q0, contact, traj)


HeuristicFn = Callable[..., HeuristicPlan]

HEURISTICS: Dict[str, HeuristicFn] = {
    "push-revolute": heuristic_door_push,
    "pull-revolute": heuristic_door_pull,
    "push-prismatic": heuristic_drawer_push,
    "pull-prismatic": heuristic_drawer_pull,
}


def heuristic_for(obj: ArticulatedObject, task: TaskSpec) -> HeuristicFn:
    return HEURISTICS[f"{task.interaction_type}-{obj.joint_type}"]


def execute_heuristic(plan: HeuristicPlan, cfg: Optional[Settings] = None, config_hash: str = "") -> InteractionRecord:
    """Run a plan open-loop in the engine; a plan that failed up front is recorded as unsuccessful."""
    cfg = cfg or settings
    traj = plan.trajectory
    env = start_episode(plan.obj, plan.task, plan.contact, plan.start_q, traj.waypoints[0], traj.eulers[0], cfg.sim)
    steps: List[StepDoc] = []
    if plan.failure is None:
        for wp, eul in zip(traj.waypoints[1:], traj.eulers[1:]):
            report = advance_gripper(env, wp, eul)
            steps.append(StepDoc(delta_theta=env.delta_theta, d_gc=report.d_gc, grasped=env.mode == "grasped"))
    record = make_record(env, plan.task, traj, steps, None, 0, f"heuristic:{plan.method}", config_hash)
    if plan.failure is not None:
        record = record.model_copy(update={"success": False, "failure": plan.failure})
    log.debug("heuristic_executed method=%s object_id=%s achieved=%.4f success=%s",
              plan.method, plan.obj.object_id, record.achieved, record.success)
    return record


def heuristic_success(tasks: Sequence, seed: int = 0, cfg: Optional[Settings] = None) -> float:
    """Success percentage of the matching heuristic over TaskSample-like tasks."""
    cfg = cfg or settings
    wins = 0
    for i, t in enumerate(tasks):
        plan = heuristic_for(t.obj, t.task)(t.obj, t.task, seed + i, start_q=t.start_q, cfg=cfg)
        wins += int(execute_heuristic(plan, cfg).success)
    rate = 100.0 * wins / max(1, len(tasks))
    log.info("heuristic_eval tasks=%d success_rate=%.2f", len(tasks), rate)
    return rate
