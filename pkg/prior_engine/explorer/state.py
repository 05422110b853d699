"""33-dim privileged state.

Layout: [dtheta, theta, theta - dtheta | wp0 pos(3) + rot6d(6) | pose pos(3) + euler(3)
| fingers(2) | contact p(3) | n_j(3) | x_j(3) | d_cj(1) | n_cj(3)]
"""
from __future__ import annotations

import numpy as np

from prior_engine.compute.rotations import rot6d_from_matrix
from prior_engine.compute.sampling import orthonormal_basis
from prior_engine.schemas.task import TaskSpec
from prior_engine.sim.engine import EpisodeState

STATE_DIM = 33
IDX_DTHETA, IDX_THETA, IDX_GAP = 0, 1, 2


def contact_axis_geometry(state: EpisodeState):
    """(x_j, d_cj, n_cj) for the current contact point."""
    obj = state.obj
    p = state.contact_point
    x_j = obj.axis_foot(p)
    radial = p - x_j
    d_cj = float(np.linalg.norm(radial))
    if d_cj > 1e-9:
        n_cj = radial / d_cj
    else:
        n_cj = orthonormal_basis(obj.joint_axis)[0]
    return x_j, d_cj, n_cj


def build_state(state: EpisodeState, task: TaskSpec) -> np.ndarray:
    dtheta = state.delta_theta
    theta = float(task.theta)
    x_j, d_cj, n_cj = contact_axis_geometry(state)
    vec = np.concatenate([
        [dtheta, theta, theta - dtheta],
        state.wp0.position,
        rot6d_from_matrix(state.wp0.orientation),
        state.gripper.position,
        state.gripper_euler,
        state.fingers,
        state.contact_point,
        state.obj.joint_axis,
        x_j,
        [d_cj],
        n_cj,
    ])
    return vec.astype(np.float32)


def retarget_state(vec: np.ndarray, theta: float) -> np.ndarray:
    """Same state with a different task value (used by hindsight relabeling)."""
    out = np.array(vec, dtype=np.float32, copy=True)
    out[IDX_THETA] = theta
    out[IDX_GAP] = theta - out[IDX_DTHETA]
    return out
