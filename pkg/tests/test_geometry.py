"""Rotations, cone sampling and the 30-dim trajectory layout."""

import math

import numpy as np
import pytest
import torch

from prior_engine.compute.rotations import (
    check_rotation,
    euler_to_matrix,
    euler_xyz_to_matrix_torch,
    frame_from_approach,
    matrix_to_euler,
    random_rotation,
    rot6d_from_matrix,
    rot6d_to_matrix,
    rot6d_to_matrix_torch,
)
from prior_engine.compute.sampling import farthest_point_indices, sample_cone_direction
from prior_engine.compute.trajectory import (
    MAX_WAYPOINTS,
    TRAJ_DIM,
    Trajectory,
    Waypoint,
    absolute_slots,
    compose_residual,
    deserialize_trajectory,
    serialize_trajectory,
    trajectory_from_positions,
)
from prior_engine.errors import GeometryError


def _trajectory(n: int, rng: np.random.Generator, itype: str = "push") -> Trajectory:
    wp = Waypoint.from_euler(rng.uniform(-0.5, 0.5, 3), rng.uniform(-1.0, 1.0, 3))
    traj = Trajectory((wp,), itype)
    for _ in range(n - 1):
        d_eul = rng.uniform(-0.2, 0.2, 3)
        nxt = compose_residual(traj.waypoints[-1], rng.uniform(-0.1, 0.1, 3), d_eul, traj.eulers[-1])
        traj = traj.appended(nxt, traj.eulers[-1] + d_eul)
    return traj


class TestRotations:
    """Matrix, euler and 6D conversions."""

    def test_rot6d_round_trip(self, rng):
        for _ in range(50):
            R = random_rotation(rng)
            assert np.abs(rot6d_to_matrix(rot6d_from_matrix(R)) - R).max() < 1e-6

    def test_rot6d_known_values(self):
        assert np.allclose(rot6d_from_matrix(np.eye(3)), [1, 0, 0, 0, 1, 0])
        rz = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        assert np.allclose(rot6d_from_matrix(rz), [0, 1, 0, -1, 0, 0])
        assert np.allclose(rot6d_to_matrix([2.0, 0.0, 0.0, 0.0, 3.0, 0.0]), np.eye(3))

    def test_compose_residual_quarter_turn(self):
        start = Waypoint.from_euler([0.0, 0.0, 0.0], [0.0, 0.0, 0.0])
        nxt = compose_residual(start, [0.01, 0.0, 0.0], [0.0, 0.0, math.pi / 2])
        assert np.allclose(nxt.position, [0.01, 0.0, 0.0])
        assert np.allclose(nxt.orientation, [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-12)

    def test_rot6d_normalizes_scaled_columns(self, rng):
        R = random_rotation(rng)
        r6 = rot6d_from_matrix(R)
        r6[:3] *= 3.0
        r6[3:] = r6[3:] * 0.5 + 0.2 * r6[:3]
        assert np.allclose(rot6d_to_matrix(r6), R, atol=1e-9)

    def test_parallel_columns_rejected(self):
        with pytest.raises(GeometryError):
            rot6d_to_matrix([1.0, 0.0, 0.0, 2.0, 0.0, 0.0])

    def test_zero_vector_rejected(self):
        with pytest.raises(GeometryError):
            rot6d_to_matrix(np.zeros(6))

    def test_non_orthonormal_rejected(self):
        with pytest.raises(GeometryError):
            check_rotation(np.diag([1.0, 1.0, 2.0]))
        with pytest.raises(GeometryError):
            check_rotation(np.diag([1.0, 1.0, -1.0]))

    def test_euler_round_trip(self, rng):
        for _ in range(20):
            R = random_rotation(rng)
            assert np.allclose(euler_to_matrix(matrix_to_euler(R)), R, atol=1e-9)

    def test_torch_conversions_match_numpy(self, rng):
        eul = rng.uniform(-math.pi, math.pi, (8, 3))
        R_t = euler_xyz_to_matrix_torch(torch.from_numpy(eul))
        for e, R in zip(eul, R_t.numpy()):
            assert np.allclose(R, euler_to_matrix(e), atol=1e-9)
        r6 = torch.from_numpy(np.stack([rot6d_from_matrix(R) for R in R_t.numpy()]))
        assert torch.allclose(rot6d_to_matrix_torch(r6), R_t, atol=1e-9)

    def test_frame_from_approach(self):
        approach = np.array([-1.0, 0.0, 0.0])
        R = frame_from_approach(approach, roll=0.7)
        check_rotation(R)
        assert np.allclose(R[:, 0], approach)


class TestSampling:
    """Cone directions and farthest-point subsampling."""

    def test_cone_stays_within_half_angle(self, rng):
        normal = np.array([0.0, 0.6, 0.8])
        for _ in range(200):
            d = sample_cone_direction(normal, math.radians(30.0), rng)
            assert abs(np.linalg.norm(d) - 1.0) < 1e-9
            assert np.dot(d, -normal) >= math.cos(math.radians(30.0)) - 1e-9

    def test_zero_angle_is_antinormal(self):
        normal = np.array([1.0, 0.0, 0.0])
        assert np.allclose(sample_cone_direction(normal, 0.0, 3), -normal)

    def test_cone_rejects_non_unit_normal(self):
        with pytest.raises(GeometryError):
            sample_cone_direction(np.array([0.0, 0.0, 2.0]), 0.5, 0)

    def test_farthest_points_unique_and_seeded(self, rng):
        points = rng.normal(size=(300, 3))
        a = farthest_point_indices(points, 40, 5)
        b = farthest_point_indices(points, 40, 5)
        assert np.array_equal(a, b)
        assert len(set(a.tolist())) == 40
        with pytest.raises(GeometryError):
            farthest_point_indices(points, 301, 0)


class TestTrajectoryLayout:
    """Residual serialization, padding and absolute slots."""

    @pytest.mark.parametrize("n", [1, 3, 5])
    def test_serialize_deserialize_identity(self, n, rng):
        traj = _trajectory(n, rng)
        vec = serialize_trajectory(traj)
        assert vec.shape == (TRAJ_DIM,)
        back = deserialize_trajectory(vec, "push")
        assert len(back) == n
        for a, b in zip(traj.waypoints, back.waypoints):
            assert np.allclose(a.position, b.position, atol=1e-12)
            assert np.allclose(a.orientation, b.orientation, atol=1e-9)
        assert np.allclose(serialize_trajectory(back), vec, atol=1e-12)

    def test_unused_slots_are_zero(self, rng):
        vec = serialize_trajectory(_trajectory(2, rng)).reshape(MAX_WAYPOINTS, 6)
        assert not np.any(vec[2:])

    def test_residual_slots_hold_differences(self):
        start = Waypoint.from_euler([0.1, 0.2, 0.3], [0.0, 0.0, 0.0])
        traj = trajectory_from_positions(start, [np.array([0.0, 0.0, -0.05])] * 2, "pull")
        slots = serialize_trajectory(traj).reshape(MAX_WAYPOINTS, 6)
        assert np.allclose(slots[0, :3], [0.1, 0.2, 0.3])
        assert np.allclose(slots[1, :3], [0.0, 0.0, -0.05])
        assert np.allclose(slots[2, :3], [0.0, 0.0, -0.05])

    def test_pad_tolerance_trims_near_zero_slots(self, rng):
        vec = serialize_trajectory(_trajectory(2, rng))
        vec[18:24] = 1e-5
        assert len(deserialize_trajectory(vec, "push")) == 4
        assert len(deserialize_trajectory(vec, "push", pad_tol=1e-3)) == 2

    def test_too_many_waypoints(self, rng):
        wps = tuple(Waypoint.from_euler(rng.uniform(size=3), [0.0, 0.0, 0.0]) for _ in range(6))
        with pytest.raises(GeometryError):
            Trajectory(wps, "push")

    def test_wrong_length_rejected(self):
        with pytest.raises(GeometryError):
            deserialize_trajectory(np.zeros(29), "push")

    def test_absolute_slots_pad_with_last_pose(self, rng):
        traj = _trajectory(3, rng)
        positions, rot6 = absolute_slots(traj)
        assert positions.shape == (5, 3) and rot6.shape == (5, 6)
        assert np.allclose(positions[3], traj.waypoints[-1].position)
        assert np.allclose(positions[4], traj.waypoints[-1].position)
        assert np.allclose(rot6[4], rot6d_from_matrix(traj.waypoints[-1].orientation))

    def test_json_round_trip(self, rng):
        traj = _trajectory(4, rng, "pull")
        back = Trajectory.from_json(traj.to_json())
        assert back.interaction_type == "pull"
        assert np.allclose(serialize_trajectory(back), serialize_trajectory(traj))

    def test_nonfinite_residual_rejected(self):
        wp = Waypoint.from_euler([0.0, 0.0, 0.0], [0.0, 0.0, 0.0])
        with pytest.raises(GeometryError):
            compose_residual(wp, [np.nan, 0.0, 0.0], [0.0, 0.0, 0.0])
