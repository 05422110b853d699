"""Rotation representations.

Canonical internal orientation is a 3x3 rotation matrix. Euler angles use the
intrinsic XYZ convention everywhere (scipy "XYZ", i.e. R = Rx(a) @ Ry(b) @ Rz(c)).
The 6D representation is the first two matrix columns concatenated.
"""
from __future__ import annotations

import warnings

import numpy as np
import torch
from scipy.spatial.transform import Rotation

from prior_engine.errors import GeometryError

EULER_SEQ = "XYZ"
ORTHO_TOL = 1e-6


def check_rotation(R: np.ndarray, tol: float = ORTHO_TOL) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise GeometryError(f"rotation must be a finite 3x3 matrix, got shape {R.shape}")
    err = np.abs(R.T @ R - np.eye(3)).max()
    if err > tol:
        raise GeometryError(f"matrix is not orthonormal (max |RtR - I| = {err:.3g})")
    det = np.linalg.det(R)
    if abs(det - 1.0) > tol:
        raise GeometryError(f"rotation determinant must be +1, got {det:.6f}")
    return R


def rot6d_from_matrix(R: np.ndarray) -> np.ndarray:
    R = check_rotation(R)
    return np.concatenate([R[:, 0], R[:, 1]])


def rot6d_to_matrix(r6: np.ndarray, eps: float = 1e-9) -> np.ndarray:
    r6 = np.asarray(r6, dtype=np.float64).reshape(-1)
    if r6.shape != (6,) or not np.all(np.isfinite(r6)):
        raise GeometryError("6D rotation must be 6 finite values")
    a1, a2 = r6[:3], r6[3:]
    n1 = np.linalg.norm(a1)
    if n1 < eps:
        raise GeometryError("first 6D column is zero")
    b1 = a1 / n1
    u2 = a2 - np.dot(b1, a2) * b1
    n2 = np.linalg.norm(u2)
    if n2 < eps * max(1.0, np.linalg.norm(a2)):
        raise GeometryError("6D columns are zero or parallel")
    b2 = u2 / n2
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=1)


def euler_to_matrix(euler: np.ndarray) -> np.ndarray:
    return Rotation.from_euler(EULER_SEQ, np.asarray(euler, dtype=np.float64)).as_matrix()


def matrix_to_euler(R: np.ndarray) -> np.ndarray:
    with warnings.catch_warnings():
        # gimbal-lock warning; the returned angles still reproduce R
        warnings.simplefilter("ignore", UserWarning)
        return Rotation.from_matrix(np.asarray(R, dtype=np.float64)).as_euler(EULER_SEQ)


def axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    return Rotation.from_rotvec(axis / np.linalg.norm(axis) * float(angle)).as_matrix()


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    return Rotation.random(random_state=rng).as_matrix()


def frame_from_approach(approach: np.ndarray, roll: float = 0.0) -> np.ndarray:
    """Gripper frame: column 0 = approach (forward), column 1 = finger closing axis."""
    x = np.asarray(approach, dtype=np.float64)
    x = x / np.linalg.norm(x)
    helper = np.array([0.0, 0.0, 1.0]) if abs(x[2]) < 0.9 else np.array([0.0, 1.0, 0.0])
    y = np.cross(helper, x)
    y /= np.linalg.norm(y)
    z = np.cross(x, y)
    c, s = np.cos(roll), np.sin(roll)
    y_r = c * y + s * z
    z_r = np.cross(x, y_r)
    return np.stack([x, y_r, z_r], axis=1)


# -------------------------
# Batched torch versions (differentiable)
# -------------------------
def rot6d_from_matrix_torch(R: torch.Tensor) -> torch.Tensor:
    return torch.cat([R[..., :, 0], R[..., :, 1]], dim=-1)


def rot6d_to_matrix_torch(r6: torch.Tensor, eps: float = 1e-8) -> torch.Tensor:
    a1, a2 = r6[..., :3], r6[..., 3:]
    b1 = a1 / a1.norm(dim=-1, keepdim=True).clamp_min(eps)
    u2 = a2 - (b1 * a2).sum(dim=-1, keepdim=True) * b1
    b2 = u2 / u2.norm(dim=-1, keepdim=True).clamp_min(eps)
    b3 = torch.cross(b1, b2, dim=-1)
    return torch.stack([b1, b2, b3], dim=-1)


def euler_xyz_to_matrix_torch(euler: torch.Tensor) -> torch.Tensor:
    a, b, c = euler[..., 0], euler[..., 1], euler[..., 2]
    one, zero = torch.ones_like(a), torch.zeros_like(a)

    def _stack(rows):
        return torch.stack([torch.stack(r, dim=-1) for r in rows], dim=-2)

    rx = _stack([[one, zero, zero], [zero, a.cos(), -a.sin()], [zero, a.sin(), a.cos()]])
    ry = _stack([[b.cos(), zero, b.sin()], [zero, one, zero], [-b.sin(), zero, b.cos()]])
    rz = _stack([[c.cos(), -c.sin(), zero], [c.sin(), c.cos(), zero], [zero, zero, one]])
    return rx @ ry @ rz
