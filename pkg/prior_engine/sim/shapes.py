"""Procedural box-composite doors and drawers.

Raw geometry is laid out in metres with the front facing +x and z up, then
centred and scaled so the closed shape fits a unit cube. The movable part's
local frame is the world frame at q = 0.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from prior_engine.compute.rotations import axis_angle_matrix
from prior_engine.errors import GeometryError, TaskSpecError
from prior_engine.schemas.shape import HandleSpec, JointSpec, ShapeSpec
from prior_engine.utils.seeding import derive_seed, make_rng

log = logging.getLogger("prior_engine.sim")

Category = Literal["door", "drawer"]
Role = Literal["body", "panel", "handle", "tray"]

CATEGORIES: Tuple[str, ...] = ("door", "drawer")
STYLES: Dict[str, Tuple[str, ...]] = {
    "door": ("cabinet", "fridge", "microwave", "safe", "washer"),
    "drawer": ("cabinet", "table"),
}
_CATEGORY_KEY = {"door": 1, "drawer": 2}


@dataclass(frozen=True, eq=False)
class Box:
    center: np.ndarray
    half: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    movable: bool = False
    role: Role = "body"

    def posed(self, R: np.ndarray, t: np.ndarray) -> "Box":
        return Box(R @ self.center + t, self.half, R @ self.rotation, self.movable, self.role)

    def to_local(self, p: np.ndarray) -> np.ndarray:
        return self.rotation.T @ (np.asarray(p, dtype=np.float64) - self.center)

    def contains(self, p: np.ndarray, eps: float = 1e-7) -> bool:
        return bool(np.all(np.abs(self.to_local(p)) <= self.half + eps))


@dataclass(eq=False)
class ArticulatedObject:
    spec: ShapeSpec
    boxes: Tuple[Box, ...]
    joint_type: Literal["revolute", "prismatic"]
    joint_axis: np.ndarray
    joint_location: np.ndarray
    joint_limits: np.ndarray

    def __post_init__(self):
        self.joint_axis = np.asarray(self.joint_axis, dtype=np.float64).reshape(3)
        self.joint_location = np.asarray(self.joint_location, dtype=np.float64).reshape(3)
        self.joint_limits = np.asarray(self.joint_limits, dtype=np.float64).reshape(2)
        if abs(np.linalg.norm(self.joint_axis) - 1.0) > 1e-9:
            raise GeometryError("joint axis must be unit length")
        if not self.joint_limits[0] < self.joint_limits[1]:
            raise GeometryError("joint limits must satisfy q_min < q_max")
        if not any(b.movable for b in self.boxes):
            raise GeometryError("object has no movable geometry")

    @property
    def object_id(self) -> str:
        return self.spec.object_id

    @property
    def category(self) -> str:
        return self.spec.category

    @property
    def style(self) -> str:
        return self.spec.style

    @property
    def category_key(self) -> str:
        """Fine-grained category used for category-level splits."""
        return f"{self.spec.category}:{self.spec.style}"

    @property
    def has_handle(self) -> bool:
        return self.spec.handle.kind != "none"

    @property
    def part_indices(self) -> List[int]:
        return [i for i, b in enumerate(self.boxes) if b.movable]

    # -------------------------
    # Joint kinematics
    # -------------------------
    def part_pose(self, q: float) -> Tuple[np.ndarray, np.ndarray]:
        """(R, t) with world = R @ local + t for movable geometry at joint value q."""
        if self.joint_type == "prismatic":
            return np.eye(3), float(q) * self.joint_axis
        R = axis_angle_matrix(self.joint_axis, float(q))
        return R, self.joint_location - R @ self.joint_location

    def boxes_at(self, q: float) -> Tuple[Box, ...]:
        R, t = self.part_pose(q)
        return tuple(b.posed(R, t) if b.movable else b for b in self.boxes)

    def to_world(self, local_point: np.ndarray, q: float) -> np.ndarray:
        R, t = self.part_pose(q)
        return R @ np.asarray(local_point, dtype=np.float64) + t

    def direction_to_world(self, local_dir: np.ndarray, q: float) -> np.ndarray:
        R, _ = self.part_pose(q)
        return R @ np.asarray(local_dir, dtype=np.float64)

    def to_local(self, world_point: np.ndarray, q: float) -> np.ndarray:
        R, t = self.part_pose(q)
        return R.T @ (np.asarray(world_point, dtype=np.float64) - t)

    def direction_to_local(self, world_dir: np.ndarray, q: float) -> np.ndarray:
        R, _ = self.part_pose(q)
        return R.T @ np.asarray(world_dir, dtype=np.float64)

    def axis_foot(self, p: np.ndarray) -> np.ndarray:
        """Closest point on the joint axis line to p."""
        r = np.asarray(p, dtype=np.float64) - self.joint_location
        return self.joint_location + np.dot(r, self.joint_axis) * self.joint_axis

    def clamp(self, q: float) -> float:
        return float(np.clip(q, self.joint_limits[0], self.joint_limits[1]))

    def within_limits(self, q: float, tol: float = 1e-9) -> bool:
        return self.joint_limits[0] - tol <= q <= self.joint_limits[1] + tol

    def feasible_start_interval(self, theta: float) -> Tuple[float, float]:
        """Start values q0 such that q0 and q0 + theta both lie inside the limits."""
        q_min, q_max = float(self.joint_limits[0]), float(self.joint_limits[1])
        lo = max(q_min, q_min - theta)
        hi = min(q_max, q_max - theta)
        if lo > hi:
            raise TaskSpecError(
                f"task theta={theta:.4f} infeasible for limits [{q_min:.4f}, {q_max:.4f}]"
            )
        return lo, hi


# -------------------------
# Raw geometry
# -------------------------
def _aabb(center: Sequence[float], half: Sequence[float], movable: bool = False, role: Role = "body") -> Box:
    return Box(np.asarray(center, dtype=np.float64), np.asarray(half, dtype=np.float64), np.eye(3), movable, role)


def _shell(W: float, H: float, D: float, w: float) -> List[Box]:
    return [
        _aabb((-D / 2 + w / 2, 0, 0), (w / 2, W / 2, H / 2)),
        _aabb((0, W / 2 - w / 2, 0), (D / 2, w / 2, H / 2)),
        _aabb((0, -W / 2 + w / 2, 0), (D / 2, w / 2, H / 2)),
        _aabb((0, 0, H / 2 - w / 2), (D / 2, W / 2 - w, w / 2)),
        _aabb((0, 0, -H / 2 + w / 2), (D / 2, W / 2 - w, w / 2)),
    ]


def _static_front(W: float, H: float, D: float, t: float, z0: float, z1: float) -> List[Box]:
    """Fixed front panels covering the face outside the movable band [z0, z1]."""
    out = []
    if z0 > -H / 2 + 1e-9:
        out.append(_aabb((D / 2 + t / 2, 0, (-H / 2 + z0) / 2), (t / 2, W / 2, (z0 + H / 2) / 2)))
    if z1 < H / 2 - 1e-9:
        out.append(_aabb((D / 2 + t / 2, 0, (z1 + H / 2) / 2), (t / 2, W / 2, (H / 2 - z1) / 2)))
    return out


def _handle(h: HandleSpec) -> List[Box]:
    if h.kind == "none":
        return []
    c = np.asarray(h.center, dtype=np.float64)
    th = h.thickness
    post_x = c[0] - th / 2 - h.standoff / 2
    if h.kind == "knob":
        return [
            _aabb(c, (th / 2, th / 2, th / 2), True, "handle"),
            _aabb((post_x, c[1], c[2]), (h.standoff / 2, th / 4, th / 4), True, "handle"),
        ]
    half = (th / 2, th / 2, h.length / 2) if h.vertical else (th / 2, h.length / 2, th / 2)
    along = 2 if h.vertical else 1
    boxes = [_aabb(c, half, True, "handle")]
    for sign in (-1.0, 1.0):
        pc = np.array([post_x, c[1], c[2]])
        pc[along] += sign * (h.length / 2 - th)
        boxes.append(_aabb(pc, (h.standoff / 2, th * 0.375, th * 0.375), True, "handle"))
    return boxes


def _door_boxes(d: Dict[str, float], handle: HandleSpec) -> List[Box]:
    W, H, D, w, t = d["W"], d["H"], d["D"], d["wall"], d["door_t"]
    z0, z1 = d["band_z0"], d["band_z1"]
    boxes = _shell(W, H, D, w) + _static_front(W, H, D, t, z0, z1)
    boxes.append(_aabb((D / 2 + t / 2, 0, (z0 + z1) / 2), (t / 2, W / 2, (z1 - z0) / 2), True, "panel"))
    return boxes + _handle(handle)


def _drawer_boxes(d: Dict[str, float], handle: HandleSpec) -> List[Box]:
    W, H, D, w, t = d["W"], d["H"], d["D"], d["wall"], d["front_t"]
    z0, z1, gap, tray_h = d["band_z0"], d["band_z1"], d["gap"], d["tray_h"]
    depth = D - 2 * w
    inner = W / 2 - w - gap
    zb = z0 + gap
    boxes = _shell(W, H, D, w) + _static_front(W, H, D, t, z0, z1)
    boxes += [
        _aabb((D / 2 + t / 2, 0, (z0 + z1) / 2), (t / 2, W / 2, (z1 - z0) / 2), True, "panel"),
        _aabb((D / 2 - depth / 2, 0, zb + w / 2), (depth / 2, inner, w / 2), True, "tray"),
        _aabb((D / 2 - depth / 2, inner - w / 2, zb + tray_h / 2), (depth / 2, w / 2, tray_h / 2), True, "tray"),
        _aabb((D / 2 - depth / 2, -inner + w / 2, zb + tray_h / 2), (depth / 2, w / 2, tray_h / 2), True, "tray"),
        _aabb((D / 2 - depth + w / 2, 0, zb + tray_h / 2), (w / 2, inner, tray_h / 2), True, "tray"),
    ]
    return boxes + _handle(handle)


def _raw_boxes(category: str, dims: Dict[str, float], handle: HandleSpec) -> List[Box]:
    return _door_boxes(dims, handle) if category == "door" else _drawer_boxes(dims, handle)


# -------------------------
# Samplers (raw units)
# -------------------------
_DOOR_RANGES = {
    # W, H, D, door thickness
    "cabinet": ((0.45, 0.9), (0.5, 1.0), (0.35, 0.6), (0.018, 0.03)),
    "fridge": ((0.6, 0.8), (1.4, 1.8), (0.6, 0.75), (0.04, 0.06)),
    "microwave": ((0.45, 0.6), (0.28, 0.36), (0.35, 0.45), (0.025, 0.035)),
    "safe": ((0.35, 0.6), (0.35, 0.6), (0.35, 0.6), (0.05, 0.08)),
    "washer": ((0.55, 0.65), (0.8, 0.9), (0.55, 0.65), (0.035, 0.045)),
}
_DOOR_HANDLES = {
    "cabinet": (("bar", "knob", "none"), (0.5, 0.3, 0.2)),
    "fridge": (("bar", "none"), (0.85, 0.15)),
    "microwave": (("bar", "none"), (0.5, 0.5)),
    "safe": (("knob", "bar"), (0.7, 0.3)),
    "washer": (("bar", "none"), (0.6, 0.4)),
}
_DRAWER_HANDLES = {
    "cabinet": (("bar", "knob", "none"), (0.5, 0.3, 0.2)),
    "table": (("knob", "bar", "none"), (0.5, 0.3, 0.2)),
}


def _u(rng: np.random.Generator, lo_hi: Tuple[float, float]) -> float:
    return float(rng.uniform(*lo_hi))


def _sample_handle(rng: np.random.Generator, kinds, probs, front_x: float, y: float, z: float,
                   max_len: float, vertical: bool) -> HandleSpec:
    kind = str(rng.choice(kinds, p=probs))
    if kind == "none":
        return HandleSpec(kind="none")
    standoff = _u(rng, (0.02, 0.04))
    if kind == "knob":
        th = _u(rng, (0.03, 0.045))
        length = th
    else:
        th = _u(rng, (0.015, 0.025))
        length = float(rng.uniform(0.1, max(0.11, max_len)))
    center = [front_x + standoff + th / 2, y, z]
    return HandleSpec(kind=kind, center=center, length=length, thickness=th, standoff=standoff, vertical=vertical)


def _sample_door(rng: np.random.Generator, style: str) -> Tuple[Dict[str, float], HandleSpec, Dict]:
    (w_r, h_r, d_r, t_r) = _DOOR_RANGES[style]
    W, H, D, t = _u(rng, w_r), _u(rng, h_r), _u(rng, d_r), _u(rng, t_r)
    wall = 0.02
    if style == "washer":
        z1 = H / 2 - 0.05 * H
        z0 = z1 - _u(rng, (0.45, 0.6)) * H
    else:
        z0, z1 = -H / 2, H / 2
    side = 1.0 if style == "microwave" else float(rng.choice([-1.0, 1.0]))
    band = z1 - z0
    kinds, probs = _DOOR_HANDLES[style]
    y_h = -side * (W / 2 - _u(rng, (0.04, 0.08)))
    z_h = (z0 + z1) / 2 + _u(rng, (-0.15, 0.15)) * band
    handle = _sample_handle(rng, kinds, probs, D / 2 + t, y_h, z_h, min(0.4, 0.6 * band), vertical=True)
    dims = {"W": W, "H": H, "D": D, "wall": wall, "door_t": t, "band_z0": z0, "band_z1": z1, "hinge_side": side}
    joint = {
        "type": "revolute",
        "axis": [0.0, 0.0, side],
        "location": [D / 2, side * W / 2, 0.0],
        "limits": [0.0, _u(rng, (0.55 * np.pi, 0.9 * np.pi))],
    }
    return dims, handle, joint


def _sample_drawer(rng: np.random.Generator, style: str) -> Tuple[Dict[str, float], HandleSpec, Dict]:
    wall, gap = 0.02, 0.005
    if style == "table":
        W, H, D = _u(rng, (0.8, 1.2)), _u(rng, (0.6, 0.8)), _u(rng, (0.5, 0.8))
        slot_h = _u(rng, (0.1, 0.16))
        z1 = H / 2 - wall
        z0 = z1 - slot_h
        n_slots, slot_index = 1, 0
    else:
        W, H, D = _u(rng, (0.4, 0.9)), _u(rng, (0.3, 0.9)), _u(rng, (0.4, 0.6))
        n_slots = int(rng.integers(1, 4))
        slot_index = int(rng.integers(n_slots))
        slot_h = H / n_slots
        z0 = -H / 2 + slot_index * slot_h
        z1 = z0 + slot_h
    t = _u(rng, (0.018, 0.03))
    tray_h = 0.7 * (z1 - z0) - gap
    depth = D - 2 * wall
    kinds, probs = _DRAWER_HANDLES[style]
    handle = _sample_handle(rng, kinds, probs, D / 2 + t, 0.0, (z0 + z1) / 2, min(0.5 * W, 0.35), vertical=False)
    dims = {
        "W": W, "H": H, "D": D, "wall": wall, "front_t": t, "band_z0": z0, "band_z1": z1,
        "gap": gap, "tray_h": tray_h, "n_slots": float(n_slots), "slot_index": float(slot_index),
    }
    joint = {
        "type": "prismatic",
        "axis": [1.0, 0.0, 0.0],
        "location": [D / 2 + t / 2, 0.0, (z0 + z1) / 2],
        "limits": [0.0, 0.9 * depth],
    }
    return dims, handle, joint


# -------------------------
# Public API
# -------------------------
def build_object(spec: ShapeSpec) -> ArticulatedObject:
    """Deterministically rebuild geometry from a ShapeSpec."""
    raw = _raw_boxes(spec.category, spec.dimensions, spec.handle)
    offset = np.asarray(spec.offset, dtype=np.float64)
    boxes = tuple(
        Box((b.center + offset) * spec.scale, b.half * spec.scale, b.rotation, b.movable, b.role) for b in raw
    )
    return ArticulatedObject(
        spec=spec,
        boxes=boxes,
        joint_type=spec.joint.type,
        joint_axis=np.asarray(spec.joint.axis, dtype=np.float64),
        joint_location=np.asarray(spec.joint.location, dtype=np.float64),
        joint_limits=np.asarray(spec.joint.limits, dtype=np.float64),
    )


def generate_shape(category: str, seed: int, style: Optional[str] = None) -> ArticulatedObject:
    if category not in CATEGORIES:
        raise ValueError(f"category must be one of {CATEGORIES}, got {category!r}")
    rng = make_rng(derive_seed(seed, _CATEGORY_KEY[category]))
    style = style or str(rng.choice(STYLES[category]))
    if style not in STYLES[category]:
        raise ValueError(f"style {style!r} is not a {category} style")

    sampler = _sample_door if category == "door" else _sample_drawer
    dims, handle, joint = sampler(rng, style)

    raw = _raw_boxes(category, dims, handle)
    lo = np.min([b.center - b.half for b in raw], axis=0)
    hi = np.max([b.center + b.half for b in raw], axis=0)
    offset = -(lo + hi) / 2
    scale = float(1.0 / np.max(hi - lo))

    location = (np.asarray(joint["location"]) + offset) * scale
    limits = list(joint["limits"])
    if joint["type"] == "prismatic":
        limits = [limits[0] * scale, limits[1] * scale]

    spec = ShapeSpec(
        object_id=f"{category}-{style}-{seed}",
        category=category,
        style=style,
        seed=int(seed),
        dimensions={k: float(v) for k, v in dims.items()},
        handle=handle,
        joint=JointSpec(type=joint["type"], axis=joint["axis"], location=location.tolist(), limits=limits),
        scale=scale,
        offset=offset.tolist(),
    )
    obj = build_object(spec)
    log.debug("shape_generated object_id=%s handle=%s limits=%s", spec.object_id, handle.kind, limits)
    return obj


def generate_fleet(categories: Sequence[str], per_style: int, seed: int) -> List[ArticulatedObject]:
    """`per_style` shapes for every style of each requested joint family."""
    fleet: List[ArticulatedObject] = []
    for cat in categories:
        for s_idx, style in enumerate(STYLES[cat]):
            for i in range(per_style):
                shape_seed = derive_seed(seed, _CATEGORY_KEY[cat], s_idx, i) % (2**31)
                fleet.append(generate_shape(cat, shape_seed, style=style))
    return fleet


def load_shape_spec(payload: str) -> ArticulatedObject:
    return build_object(ShapeSpec.model_validate_json(payload))
