"""Ray-cast depth rendering of box-composite objects into partial point clouds."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from prior_engine.compute.sampling import farthest_point_indices
from prior_engine.config import SimSettings, settings
from prior_engine.errors import PreconditionError
from prior_engine.schemas.task import CameraView
from prior_engine.sim.camera import camera_rays
from prior_engine.sim.shapes import ArticulatedObject, Box
from prior_engine.utils.seeding import SeedLike

log = logging.getLogger("prior_engine.sim")

_T_MIN = 1e-9
_TINY = 1e-12


@dataclass(eq=False)
class PointCloud:
    points: np.ndarray
    normals: np.ndarray
    part_mask: np.ndarray
    box_index: np.ndarray
    handle_mask: np.ndarray
    view: CameraView
    q: float

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def part_indices(self) -> np.ndarray:
        return np.flatnonzero(self.part_mask)


def cast_rays(boxes: Sequence[Box], origins: np.ndarray, dirs: np.ndarray
              ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nearest hit per ray: (distance, box index or -1, outward face normal)."""
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    n = dirs.shape[0]
    origins = np.broadcast_to(np.asarray(origins, dtype=np.float64), (n, 3))
    best_t = np.full(n, np.inf)
    best_box = np.full(n, -1, dtype=np.int64)
    best_normal = np.zeros((n, 3))
    rows = np.arange(n)
    for b, box in enumerate(boxes):
        o = (origins - box.center) @ box.rotation
        d = dirs @ box.rotation
        safe = np.where(np.abs(d) < _TINY, _TINY, d)
        t1 = (-box.half - o) / safe
        t2 = (box.half - o) / safe
        lo = np.minimum(t1, t2)
        t_near = lo.max(axis=1)
        t_far = np.maximum(t1, t2).min(axis=1)
        hit = (t_far >= t_near) & (t_near > _T_MIN) & (t_near < best_t)
        if not hit.any():
            continue
        idx = rows[hit]
        axis = lo[idx].argmax(axis=1)
        local_n = np.zeros((idx.size, 3))
        local_n[np.arange(idx.size), axis] = -np.sign(safe[idx, axis])
        best_t[idx] = t_near[idx]
        best_box[idx] = b
        best_normal[idx] = local_n @ box.rotation.T
    return best_t, best_box, best_normal


def visible_surface(obj: ArticulatedObject, q: float, view: CameraView
                    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All visible surface samples at the view's resolution: (points, normals, box index)."""
    origin, dirs = camera_rays(view)
    t, box_idx, normals = cast_rays(obj.boxes_at(q), origin, dirs)
    hit = box_idx >= 0
    points = origin[None, :] + t[hit, None] * dirs[hit]
    return points, normals[hit], box_idx[hit]


def render_pointcloud(obj: ArticulatedObject, q: float, view: CameraView, n_points: Optional[int] = None,
                      seed: SeedLike = 0, sim_cfg: Optional[SimSettings] = None) -> PointCloud:
    cfg = sim_cfg or settings.sim
    n_points = n_points or cfg.n_points
    if not obj.within_limits(q):
        raise PreconditionError(f"q={q:.4f} outside joint limits {obj.joint_limits.tolist()}")

    points, normals, box_idx = visible_surface(obj, q, view)
    if n_points > points.shape[0]:
        raise PreconditionError(
            f"n_points={n_points} exceeds {points.shape[0]} visible pixels at resolution {view.resolution}"
        )
    keep = farthest_point_indices(points, n_points, seed)
    box_idx = box_idx[keep]
    movable = np.array([b.movable for b in obj.boxes])
    handle = np.array([b.role == "handle" for b in obj.boxes])
    cloud = PointCloud(
        points=points[keep],
        normals=normals[keep],
        part_mask=movable[box_idx],
        box_index=box_idx,
        handle_mask=handle[box_idx],
        view=view,
        q=float(q),
    )
    log.debug(
        "cloud_rendered object_id=%s q=%.4f visible=%d part_points=%d",
        obj.object_id, q, points.shape[0], int(cloud.part_mask.sum()),
    )
    return cloud
