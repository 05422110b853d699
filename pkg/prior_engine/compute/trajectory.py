"""Waypoints, trajectories and the 30-dim residual serialization.

Layout: 5 slots of (3 position, 3 euler). Slot 0 holds wp0 absolute, slot i>0
holds wp_i - wp_{i-1}. Unused slots are exactly zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, List, Literal, Optional, Sequence, Tuple

import numpy as np

from prior_engine.compute.rotations import (
    check_rotation,
    euler_to_matrix,
    matrix_to_euler,
    rot6d_from_matrix,
)
from prior_engine.errors import GeometryError

InteractionType = Literal["push", "pull"]

MAX_WAYPOINTS = 5
SLOT_DIM = 6
TRAJ_DIM = MAX_WAYPOINTS * SLOT_DIM


@dataclass(frozen=True, eq=False)
class Waypoint:
    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(pos)):
            raise GeometryError("waypoint position must be finite")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "orientation", check_rotation(self.orientation))

    @classmethod
    def from_euler(cls, position: Sequence[float], euler: Sequence[float]) -> "Waypoint":
        return cls(np.asarray(position, dtype=np.float64), euler_to_matrix(euler))

    @property
    def euler(self) -> np.ndarray:
        return matrix_to_euler(self.orientation)

    @property
    def approach(self) -> np.ndarray:
        return self.orientation[:, 0]

    @property
    def closing_axis(self) -> np.ndarray:
        return self.orientation[:, 1]


@dataclass(frozen=True, eq=False)
class Trajectory:
    waypoints: Tuple[Waypoint, ...]
    interaction_type: InteractionType
    # eulers as accumulated by residual composition; keeps serialization exact
    eulers: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        wps = tuple(self.waypoints)
        if not 1 <= len(wps) <= MAX_WAYPOINTS:
            raise GeometryError(f"trajectory must hold 1..{MAX_WAYPOINTS} waypoints, got {len(wps)}")
        if self.interaction_type not in ("push", "pull"):
            raise GeometryError(f"unknown interaction type {self.interaction_type!r}")
        object.__setattr__(self, "waypoints", wps)
        if self.eulers is None:
            object.__setattr__(self, "eulers", np.stack([wp.euler for wp in wps]))
        else:
            eulers = np.asarray(self.eulers, dtype=np.float64).reshape(len(wps), 3)
            object.__setattr__(self, "eulers", eulers)

    def __len__(self) -> int:
        return len(self.waypoints)

    def appended(self, wp: Waypoint, euler: Optional[np.ndarray] = None) -> "Trajectory":
        eulers = np.vstack([self.eulers, wp.euler if euler is None else np.asarray(euler, dtype=np.float64)])
        return Trajectory(self.waypoints + (wp,), self.interaction_type, eulers)

    def to_doc(self):
        from prior_engine.schemas.trajectory import TrajectoryDoc, WaypointDoc

        return TrajectoryDoc(
            interaction_type=self.interaction_type,
            waypoints=[
                WaypointDoc(pos=wp.position.tolist(), euler=eul.tolist())
                for wp, eul in zip(self.waypoints, self.eulers)
            ],
        )

    @classmethod
    def from_doc(cls, doc) -> "Trajectory":
        wps = [Waypoint.from_euler(w.pos, w.euler) for w in doc.waypoints]
        return cls(tuple(wps), doc.interaction_type, np.array([w.euler for w in doc.waypoints], dtype=np.float64))

    def to_json(self) -> str:
        return self.to_doc().model_dump_json()

    @classmethod
    def from_json(cls, payload: str) -> "Trajectory":
        from prior_engine.schemas.trajectory import TrajectoryDoc

        return cls.from_doc(TrajectoryDoc.model_validate_json(payload))


def compose_residual(prev: Waypoint, delta_pos: Sequence[float], delta_euler: Sequence[float],
                     prev_euler: Optional[np.ndarray] = None) -> Waypoint:
    """Next waypoint from a residual; eulers add in euler space."""
    delta_pos = np.asarray(delta_pos, dtype=np.float64)
    delta_euler = np.asarray(delta_euler, dtype=np.float64)
    if not (np.all(np.isfinite(delta_pos)) and np.all(np.isfinite(delta_euler))):
        raise GeometryError("residual must be finite")
    if not np.any(delta_euler):
        return Waypoint(prev.position + delta_pos, prev.orientation)
    base = prev.euler if prev_euler is None else np.asarray(prev_euler, dtype=np.float64)
    return Waypoint.from_euler(prev.position + delta_pos, base + delta_euler)


def serialize_trajectory(t: Trajectory) -> np.ndarray:
    if len(t.waypoints) > MAX_WAYPOINTS:
        raise GeometryError(f"at most {MAX_WAYPOINTS} waypoints serialize into {TRAJ_DIM} dims")
    out = np.zeros((MAX_WAYPOINTS, SLOT_DIM), dtype=np.float64)
    positions = np.stack([wp.position for wp in t.waypoints])
    eulers = t.eulers
    out[0, :3] = positions[0]
    out[0, 3:] = eulers[0]
    if len(t.waypoints) > 1:
        out[1:len(t.waypoints), :3] = np.diff(positions, axis=0)
        out[1:len(t.waypoints), 3:] = np.diff(eulers, axis=0)
    return out.reshape(TRAJ_DIM)


def deserialize_trajectory(vec: Iterable[float], interaction_type: InteractionType,
                           pad_tol: float = 0.0) -> Trajectory:
    arr = np.asarray(list(vec) if not isinstance(vec, np.ndarray) else vec, dtype=np.float64).reshape(-1)
    if arr.shape[0] != TRAJ_DIM:
        raise GeometryError(f"serialized trajectory must have {TRAJ_DIM} entries, got {arr.shape[0]}")
    slots = arr.reshape(MAX_WAYPOINTS, SLOT_DIM)
    count = 1
    for i in range(MAX_WAYPOINTS - 1, 0, -1):
        if np.any(np.abs(slots[i]) > pad_tol):
            count = i + 1
            break
    positions = np.cumsum(slots[:count, :3], axis=0)
    eulers = np.cumsum(slots[:count, 3:], axis=0)
    wps = tuple(Waypoint.from_euler(p, e) for p, e in zip(positions, eulers))
    return Trajectory(wps, interaction_type, eulers)


def absolute_slots(t: Trajectory) -> Tuple[np.ndarray, np.ndarray]:
    """(5,3) absolute positions and (5,6) absolute 6D orientations; padding holds the last pose."""
    positions = np.stack([wp.position for wp in t.waypoints])
    rot6 = np.stack([rot6d_from_matrix(wp.orientation) for wp in t.waypoints])
    pad = MAX_WAYPOINTS - len(t.waypoints)
    if pad:
        positions = np.vstack([positions, np.repeat(positions[-1:], pad, axis=0)])
        rot6 = np.vstack([rot6, np.repeat(rot6[-1:], pad, axis=0)])
    return positions, rot6


def trajectory_from_positions(start: Waypoint, offsets: List[np.ndarray],
                              interaction_type: InteractionType) -> Trajectory:
    """Pure-translation trajectory: start pose then successive offsets, orientation held."""
    wps = [start]
    for off in offsets:
        wps.append(Waypoint(wps[-1].position + np.asarray(off, dtype=np.float64), start.orientation))
    eul = start.euler
    return Trajectory(tuple(wps), interaction_type, np.repeat(eul[None, :], len(wps), axis=0))
