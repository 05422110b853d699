from __future__ import annotations

import numpy as np

from prior_engine.errors import GeometryError
from prior_engine.utils.seeding import SeedLike, make_rng


def orthonormal_basis(axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    axis = np.asarray(axis, dtype=np.float64)
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)
    return u, v


def sample_cone_direction(normal: np.ndarray, half_angle: float, seed: SeedLike) -> np.ndarray:
    """Uniform unit vector on the spherical cap of `half_angle` around -normal."""
    normal = np.asarray(normal, dtype=np.float64).reshape(3)
    if abs(np.linalg.norm(normal) - 1.0) > 1e-6:
        raise GeometryError("cone axis normal must be unit length")
    if half_angle < 0:
        raise GeometryError("cone half angle must be non-negative")
    rng = make_rng(seed)
    axis = -normal
    cos_t = rng.uniform(np.cos(half_angle), 1.0)
    phi = rng.uniform(0.0, 2.0 * np.pi)
    sin_t = np.sqrt(max(0.0, 1.0 - cos_t * cos_t))
    if sin_t == 0.0:
        return axis
    u, v = orthonormal_basis(axis)
    return cos_t * axis + sin_t * (np.cos(phi) * u + np.sin(phi) * v)


def farthest_point_indices(points: np.ndarray, k: int, seed: SeedLike) -> np.ndarray:
    """Greedy farthest-point subsampling; first index drawn from `seed`."""
    n = points.shape[0]
    if k > n:
        raise GeometryError(f"cannot pick {k} points from {n}")
    rng = make_rng(seed)
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = int(rng.integers(n))
    dist = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    for i in range(1, k):
        chosen[i] = int(np.argmax(dist))
        dist = np.minimum(dist, np.sum((points - points[chosen[i]]) ** 2, axis=1))
    return chosen
