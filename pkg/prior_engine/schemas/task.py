from __future__ import annotations

import math
from typing import List, Literal

from pydantic import BaseModel, Field, field_validator

from prior_engine.errors import TaskSpecError

Interaction = Literal["push", "pull"]
JointType = Literal["revolute", "prismatic"]


class TaskSpec(BaseModel):
    """Signed target change of the joint coordinate plus interaction type."""

    model_config = {"frozen": True}

    theta: float
    interaction_type: Interaction
    tolerance: float = Field(default=0.15, gt=0.0, lt=1.0)

    @field_validator("theta")
    @classmethod
    def _nonzero(cls, value: float) -> float:
        if value == 0 or not math.isfinite(value):
            raise TaskSpecError("task theta must be finite and non-zero")
        return float(value)

    def with_theta(self, theta: float) -> "TaskSpec":
        return TaskSpec(theta=theta, interaction_type=self.interaction_type, tolerance=self.tolerance)


class CameraView(BaseModel):
    model_config = {"frozen": True}

    azimuth: float = Field(ge=-math.pi, le=math.pi)
    elevation: float = Field(gt=-math.pi / 2, lt=math.pi / 2)
    distance: float = Field(default=1.0, gt=0.0)
    look_at: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0], min_length=3, max_length=3)
    resolution: int = Field(default=168, ge=16)
    fov_deg: float = Field(default=75.0, gt=0.0, lt=180.0)


class ContactDoc(BaseModel):
    point: List[float] = Field(min_length=3, max_length=3)
    normal: List[float] = Field(min_length=3, max_length=3)
    local_point: List[float] = Field(min_length=3, max_length=3)
    local_normal: List[float] = Field(min_length=3, max_length=3)
    box_index: int
    on_handle: bool = False
    q_observed: float = 0.0
