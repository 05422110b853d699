"""Shared fixtures: procedural shapes, contacts and throwaway run settings."""

import math
from typing import Callable

import numpy as np
import pytest

from prior_engine.config import Settings, load_settings
from prior_engine.sim.engine import ContactSite, contact_from_world
from prior_engine.sim.shapes import ArticulatedObject, generate_fleet, generate_shape


def find_shape(category: str, style: str, accept: Callable[[ArticulatedObject], bool]) -> ArticulatedObject:
    for seed in range(500):
        obj = generate_shape(category, seed, style=style)
        if accept(obj):
            return obj
    raise RuntimeError(f"no {category}/{style} shape matched within 500 seeds")


def box_index(obj: ArticulatedObject, role: str, last: bool = False) -> int:
    found = [i for i, b in enumerate(obj.boxes) if b.role == role]
    return found[-1] if last else found[0]


def face_contact(obj: ArticulatedObject, q: float, index: int, sign: float = 1.0) -> ContactSite:
    """Contact at the centre of a box's +x (sign=1) or -x (sign=-1) local face."""
    box = obj.boxes_at(q)[index]
    normal = sign * box.rotation[:, 0]
    return contact_from_world(obj, box.center + box.half[0] * normal, normal, index, q)


@pytest.fixture(scope="session")
def drawer() -> ArticulatedObject:
    """Cabinet drawer with a bar handle thin enough to grasp."""
    return find_shape("drawer", "cabinet", lambda o: o.spec.handle.kind == "bar")


@pytest.fixture(scope="session")
def bare_drawer() -> ArticulatedObject:
    return find_shape("drawer", "cabinet", lambda o: not o.has_handle)


@pytest.fixture(scope="session")
def door() -> ArticulatedObject:
    return find_shape("door", "cabinet", lambda o: o.spec.handle.kind == "bar")


@pytest.fixture(scope="session")
def drawer_fleet():
    return generate_fleet(["drawer"], 2, seed=0)


@pytest.fixture(scope="session")
def mixed_fleet():
    return generate_fleet(["door", "drawer"], 2, seed=0)


@pytest.fixture
def cfg() -> Settings:
    return Settings()


@pytest.fixture
def run_settings(tmp_path) -> Settings:
    """Settings pointing at a temp run dir with a tiny fleet."""
    return load_settings(None, [
        f"pipeline.run_dir={tmp_path / 'run'}",
        "data.shapes_per_style=2",
    ])


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def q_max(obj: ArticulatedObject) -> float:
    return float(obj.joint_limits[1])


def deg(value: float) -> float:
    return math.radians(value)
