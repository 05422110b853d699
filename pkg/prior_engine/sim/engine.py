"""Quasi-static flying-gripper contact engine.

No inertia or friction: the joint coordinate moves exactly by the projection of
the transmitted fingertip displacement onto the part's feasible motion. Pushes
are unilateral; a successful grasp binds the fingertip to the part until it
slips beyond `grasp_slip`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Optional, Tuple

import numpy as np

from prior_engine.compute.rotations import frame_from_approach
from prior_engine.compute.sampling import sample_cone_direction
from prior_engine.compute.trajectory import Trajectory, Waypoint
from prior_engine.config import SimSettings, settings
from prior_engine.errors import PreconditionError, TaskSpecError
from prior_engine.schemas.task import ContactDoc, TaskSpec
from prior_engine.sim.render import PointCloud
from prior_engine.sim.shapes import ArticulatedObject
from prior_engine.utils.seeding import SeedLike, make_rng

log = logging.getLogger("prior_engine.sim")

ContactMode = Literal["free", "touching", "grasped"]

_INSET = 1e-6
_SUCCESS_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class ContactSite:
    """Contact point held in the movable part's frame so it follows the joint."""

    local_point: np.ndarray
    local_normal: np.ndarray
    box_index: int
    on_handle: bool = False
    q_observed: float = 0.0

    def point(self, obj: ArticulatedObject, q: float) -> np.ndarray:
        return obj.to_world(self.local_point, q)

    def normal(self, obj: ArticulatedObject, q: float) -> np.ndarray:
        return obj.direction_to_world(self.local_normal, q)

    def to_doc(self, obj: ArticulatedObject) -> ContactDoc:
        return ContactDoc(
            point=self.point(obj, self.q_observed).tolist(),
            normal=self.normal(obj, self.q_observed).tolist(),
            local_point=np.asarray(self.local_point).tolist(),
            local_normal=np.asarray(self.local_normal).tolist(),
            box_index=self.box_index,
            on_handle=self.on_handle,
            q_observed=self.q_observed,
        )

    @classmethod
    def from_doc(cls, doc: ContactDoc) -> "ContactSite":
        return cls(
            np.asarray(doc.local_point, dtype=np.float64),
            np.asarray(doc.local_normal, dtype=np.float64),
            doc.box_index,
            doc.on_handle,
            doc.q_observed,
        )


def contact_from_cloud(obj: ArticulatedObject, cloud: PointCloud, index: int) -> ContactSite:
    if not cloud.part_mask[index]:
        raise PreconditionError(f"point {index} is not on the movable part")
    return contact_from_world(obj, cloud.points[index], cloud.normals[index], int(cloud.box_index[index]), cloud.q)


def contact_from_world(obj: ArticulatedObject, point: np.ndarray, normal: np.ndarray,
                       box_index: int, q: float) -> ContactSite:
    box = obj.boxes[box_index]
    if not box.movable:
        raise PreconditionError(f"box {box_index} is not part of the movable part")
    n = np.asarray(normal, dtype=np.float64)
    return ContactSite(
        local_point=obj.to_local(point, q),
        local_normal=obj.direction_to_local(n / np.linalg.norm(n), q),
        box_index=box_index,
        on_handle=box.role == "handle",
        q_observed=float(q),
    )


@dataclass
class ContactReport:
    d_gc: float
    delta_q: float
    mode: ContactMode
    grasp_lost: bool = False


@dataclass(eq=False)
class EpisodeState:
    obj: ArticulatedObject
    task: TaskSpec
    contact: ContactSite
    start_q: float
    q: float
    gripper: Waypoint
    gripper_euler: np.ndarray
    fingers: np.ndarray
    wp0: Waypoint
    mode: ContactMode = "free"
    grasp_attempted: bool = False
    grasp_failed: bool = False
    sim: SimSettings = field(default_factory=lambda: settings.sim)

    @property
    def delta_theta(self) -> float:
        return float(self.q - self.start_q)

    @property
    def contact_point(self) -> np.ndarray:
        return self.contact.point(self.obj, self.q)

    @property
    def contact_normal(self) -> np.ndarray:
        return self.contact.normal(self.obj, self.q)

    @property
    def d_gc(self) -> float:
        return float(np.linalg.norm(self.gripper.position - self.contact_point))


# -------------------------
# Setup
# -------------------------
def start_episode(obj: ArticulatedObject, task: TaskSpec, contact: ContactSite, start_q: float,
                  wp0: Waypoint, euler0: Optional[np.ndarray] = None,
                  sim_cfg: Optional[SimSettings] = None) -> EpisodeState:
    cfg = sim_cfg or settings.sim
    lo, hi = obj.feasible_start_interval(task.theta)
    if not lo - 1e-9 <= start_q <= hi + 1e-9:
        raise TaskSpecError(f"start q={start_q:.4f} outside feasible interval [{lo:.4f}, {hi:.4f}]")
    half = cfg.finger_max_opening / 2
    return EpisodeState(
        obj=obj,
        task=task,
        contact=contact,
        start_q=float(start_q),
        q=float(start_q),
        gripper=wp0,
        gripper_euler=wp0.euler if euler0 is None else np.asarray(euler0, dtype=np.float64),
        fingers=np.array([half, -half]),
        wp0=wp0,
        sim=cfg,
    )


def reset_episode(obj: ArticulatedObject, task: TaskSpec, contact: ContactSite, seed: SeedLike,
                  start_q: Optional[float] = None, sim_cfg: Optional[SimSettings] = None) -> EpisodeState:
    cfg = sim_cfg or settings.sim
    rng = make_rng(seed)
    lo, hi = obj.feasible_start_interval(task.theta)
    theta0 = float(rng.uniform(lo, hi)) if start_q is None else float(start_q)

    p = contact.point(obj, theta0)
    approach = sample_cone_direction(contact.normal(obj, theta0), math.radians(cfg.cone_half_angle_deg), rng)
    roll = float(rng.uniform(0.0, 2.0 * math.pi))
    wp0 = Waypoint(p - cfg.approach_offset * approach, frame_from_approach(approach, roll))
    return start_episode(obj, task, contact, theta0, wp0, sim_cfg=cfg)


# -------------------------
# Grasping
# -------------------------
def part_thickness(obj: ArticulatedObject, contact: ContactSite, closing_axis: np.ndarray, q: float) -> float:
    """Ray-cast chord of the contacted solid along the closing axis.

    The chord must leave through side faces. A chord escaping through the
    contacted face or its opposite would need the fingers inside the surface,
    reported as inf.
    """
    box = obj.boxes[contact.box_index]
    axis = obj.direction_to_local(closing_axis, q)
    point = contact.local_point - _INSET * contact.local_normal
    o = box.to_local(point)
    d = box.rotation.T @ axis
    face_axis = int(np.argmax(np.abs(box.rotation.T @ contact.local_normal)))

    t_lo, t_hi = -np.inf, np.inf
    lo_axis = hi_axis = -1
    for i in range(3):
        if abs(d[i]) < 1e-12:
            if abs(o[i]) > box.half[i]:
                return math.inf
            continue
        a = (-box.half[i] - o[i]) / d[i]
        b = (box.half[i] - o[i]) / d[i]
        a, b = min(a, b), max(a, b)
        if a > t_lo:
            t_lo, lo_axis = a, i
        if b < t_hi:
            t_hi, hi_axis = b, i
    if t_lo > 0 or t_hi < 0 or t_hi < t_lo:
        return math.inf
    if face_axis in (lo_axis, hi_axis):
        return math.inf
    return float(t_hi - t_lo)


def attempt_grasp(state: EpisodeState) -> bool:
    if state.task.interaction_type != "pull":
        raise PreconditionError("grasping is only defined for pull interactions")
    state.grasp_attempted = True
    if state.mode == "grasped":
        return True
    if state.d_gc > state.sim.grasp_reach:
        return False
    thickness = part_thickness(state.obj, state.contact, state.gripper.closing_axis, state.q)
    if thickness <= state.sim.finger_max_opening:
        state.mode = "grasped"
        state.fingers = np.array([thickness / 2, -thickness / 2])
        log.debug("grasp_ok object_id=%s thickness=%.4f", state.obj.object_id, thickness)
        return True
    state.grasp_failed = True
    state.fingers = np.zeros(2)
    log.debug("grasp_failed object_id=%s thickness=%.4f", state.obj.object_id, thickness)
    return False


# -------------------------
# Motion
# -------------------------
def motion_direction(obj: ArticulatedObject, p: np.ndarray) -> Tuple[np.ndarray, float]:
    """Unit direction of contact motion for increasing q, and its speed per unit q."""
    if obj.joint_type == "prismatic":
        return obj.joint_axis, 1.0
    radial = p - obj.axis_foot(p)
    d_cj = float(np.linalg.norm(radial))
    if d_cj < 1e-9:
        return np.zeros(3), 0.0
    return np.cross(obj.joint_axis, radial) / d_cj, d_cj


def projected_delta_q(obj: ArticulatedObject, p: np.ndarray, dx: np.ndarray) -> float:
    """Prismatic: dx . n_j.  Revolute: (dx . t_hat) / d_cj."""
    direction, speed = motion_direction(obj, p)
    if speed == 0.0:
        return 0.0
    return float(np.dot(dx, direction) / speed)


def step_gripper(state: EpisodeState, target: Waypoint) -> Tuple[EpisodeState, ContactReport]:
    if not np.all(np.isfinite(target.position)):
        raise PreconditionError("target waypoint must be finite")
    cfg = state.sim
    obj = state.obj
    q_start = state.q
    fingertip = state.gripper.position.copy()
    travel = target.position - fingertip
    n_sub = max(1, int(math.ceil(float(np.linalg.norm(travel)) / cfg.substep)))
    step = travel / n_sub
    grasp_lost = False

    for _ in range(n_sub):
        p = state.contact.point(obj, state.q)
        if state.mode == "grasped":
            dq = obj.clamp(state.q + projected_delta_q(obj, p, step)) - state.q
            state.q += dq
            fingertip = fingertip + step
            if np.linalg.norm(fingertip - state.contact.point(obj, state.q)) > cfg.grasp_slip:
                state.mode = "free"
                grasp_lost = True
            continue

        n = state.contact.normal(obj, state.q)
        moved = fingertip + step
        rel = moved - p
        depth = -float(np.dot(rel, n))
        lateral = float(np.linalg.norm(rel + depth * n))
        push_in = -float(np.dot(step, n))
        if depth > 0.0 and push_in > 0.0 and lateral <= cfg.lateral_tolerance:
            dx = step * min(1.0, depth / push_in)
            dq = projected_delta_q(obj, p, dx)
            direction, _ = motion_direction(obj, p)
            # unilateral: the surface may only be pushed away from the fingertip
            if np.dot(direction, -n) * dq <= 0.0:
                dq = 0.0
            # pushes never open a drawer
            if obj.joint_type == "prismatic" and dq > 0.0:
                dq = 0.0
            dq = obj.clamp(state.q + dq) - state.q
            state.q += dq
            p2 = state.contact.point(obj, state.q)
            n2 = state.contact.normal(obj, state.q)
            gap = float(np.dot(moved - p2, n2))
            if gap < 0.0:
                moved = moved - gap * n2
            state.mode = "touching"
        elif state.mode == "touching":
            gap = float(np.dot(rel, n))
            if gap > cfg.contact_break or lateral > cfg.lateral_tolerance:
                state.mode = "free"
        fingertip = moved

    state.gripper = Waypoint(fingertip, target.orientation)
    state.gripper_euler = target.euler
    report = ContactReport(d_gc=state.d_gc, delta_q=float(state.q - q_start), mode=state.mode, grasp_lost=grasp_lost)
    return state, report


def advance_gripper(state: EpisodeState, target: Waypoint, target_euler: Optional[np.ndarray] = None
                    ) -> ContactReport:
    """One waypoint of an episode: grasp if due, move, grasp again if still due."""
    if state.task.interaction_type == "pull":
        _maybe_grasp(state)
    _, report = step_gripper(state, target)
    if target_euler is not None:
        state.gripper_euler = np.asarray(target_euler, dtype=np.float64)
    if state.task.interaction_type == "pull" and _maybe_grasp(state):
        report.mode = state.mode
    return report


def _maybe_grasp(state: EpisodeState) -> bool:
    if state.mode == "grasped" or state.grasp_failed:
        return False
    if state.d_gc > state.sim.grasp_reach:
        return False
    return attempt_grasp(state)


def check_success(task: TaskSpec, achieved: float, tolerance: Optional[float] = None) -> bool:
    theta = float(task.theta)
    if theta == 0.0:
        raise TaskSpecError("task theta must be non-zero")
    tol = task.tolerance if tolerance is None else tolerance
    return abs(theta - float(achieved)) <= tol * abs(theta) + _SUCCESS_EPS


def replay_trajectory(obj: ArticulatedObject, task: TaskSpec, contact: ContactSite, start_q: float,
                      trajectory: Trajectory, sim_cfg: Optional[SimSettings] = None) -> float:
    """Open-loop re-execution; returns the achieved change of the joint coordinate."""
    state = start_episode(obj, task, contact, start_q, trajectory.waypoints[0], trajectory.eulers[0], sim_cfg)
    for wp, eul in zip(trajectory.waypoints[1:], trajectory.eulers[1:]):
        advance_gripper(state, wp, eul)
    return state.delta_theta
