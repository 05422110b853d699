from __future__ import annotations

import math
from typing import Optional, Tuple

import numpy as np

from prior_engine.config import SimSettings, settings
from prior_engine.schemas.task import CameraView
from prior_engine.utils.seeding import SeedLike, make_rng


def sample_camera(seed: SeedLike, sim_cfg: Optional[SimSettings] = None) -> CameraView:
    cfg = sim_cfg or settings.sim
    rng = make_rng(seed)
    az_lo, az_hi = (math.radians(v) for v in cfg.azimuth_range_deg)
    el_lo, el_hi = (math.radians(v) for v in cfg.elevation_range_deg)
    return CameraView(
        azimuth=float(rng.uniform(az_lo, az_hi)),
        elevation=float(rng.uniform(el_lo, el_hi)),
        distance=cfg.camera_distance,
        resolution=cfg.render_resolution,
        fov_deg=cfg.fov_deg,
    )


def frontal_view(elevation_deg: float = 30.0, sim_cfg: Optional[SimSettings] = None) -> CameraView:
    cfg = sim_cfg or settings.sim
    return CameraView(
        azimuth=0.0,
        elevation=math.radians(elevation_deg),
        distance=cfg.camera_distance,
        resolution=cfg.render_resolution,
        fov_deg=cfg.fov_deg,
    )


def camera_position(view: CameraView) -> np.ndarray:
    ce = math.cos(view.elevation)
    offset = view.distance * np.array(
        [ce * math.cos(view.azimuth), ce * math.sin(view.azimuth), math.sin(view.elevation)]
    )
    return np.asarray(view.look_at, dtype=np.float64) + offset


def camera_rays(view: CameraView) -> Tuple[np.ndarray, np.ndarray]:
    """Camera origin and unit ray directions, one per pixel in row-major order."""
    origin = camera_position(view)
    forward = np.asarray(view.look_at, dtype=np.float64) - origin
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.array([0.0, 0.0, 1.0]))
    right /= np.linalg.norm(right)
    up = np.cross(right, forward)

    half = math.tan(math.radians(view.fov_deg) / 2)
    ticks = (np.arange(view.resolution) + 0.5) / view.resolution * 2.0 - 1.0
    v, u = np.meshgrid(-ticks, ticks, indexing="ij")
    dirs = forward[None, :] + half * (u.reshape(-1, 1) * right[None, :] + v.reshape(-1, 1) * up[None, :])
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return origin, dirs
