from __future__ import annotations

from typing import List, Literal

from pydantic import BaseModel, Field

Interaction = Literal["push", "pull"]


class WaypointDoc(BaseModel):
    pos: List[float] = Field(min_length=3, max_length=3)
    euler: List[float] = Field(min_length=3, max_length=3)


class TrajectoryDoc(BaseModel):
    interaction_type: Interaction
    waypoints: List[WaypointDoc] = Field(min_length=1, max_length=5)
