from __future__ import annotations

from typing import Dict, List, Literal

from pydantic import BaseModel, Field, field_validator

Category = Literal["door", "drawer"]
HandleKind = Literal["bar", "knob", "none"]


class HandleSpec(BaseModel):
    kind: HandleKind = "none"
    # raw (pre-normalization) geometry
    center: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0], min_length=3, max_length=3)
    length: float = 0.0
    thickness: float = 0.02
    standoff: float = 0.03
    vertical: bool = True


class JointSpec(BaseModel):
    type: Literal["revolute", "prismatic"]
    axis: List[float] = Field(min_length=3, max_length=3)
    location: List[float] = Field(min_length=3, max_length=3)
    limits: List[float] = Field(min_length=2, max_length=2)

    @field_validator("limits")
    @classmethod
    def _ordered(cls, value: List[float]) -> List[float]:
        if not value[0] < value[1]:
            raise ValueError("joint limits must satisfy q_min < q_max")
        return value


class ShapeSpec(BaseModel):
    """Procedural shape description; `build_object` turns it into geometry."""

    object_id: str
    category: Category
    style: str
    seed: int
    dimensions: Dict[str, float]
    handle: HandleSpec
    joint: JointSpec
    scale: float = Field(gt=0.0)
    offset: List[float] = Field(min_length=3, max_length=3)
