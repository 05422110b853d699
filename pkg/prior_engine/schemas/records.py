from __future__ import annotations

from typing import List, Literal, Optional

from pydantic import BaseModel, Field

from prior_engine.schemas.shape import ShapeSpec
from prior_engine.schemas.task import CameraView, ContactDoc, TaskSpec
from prior_engine.schemas.trajectory import TrajectoryDoc

Label = Literal["positive", "negative"]
NegativeKind = Literal["task-offset", "grasp-failure", "none"]


class StepDoc(BaseModel):
    delta_theta: float
    d_gc: float
    grasped: bool = False
    reward: float = 0.0


class InteractionRecord(BaseModel):
    record_id: str
    shape: ShapeSpec
    camera: Optional[CameraView] = None
    cloud_seed: int = 0
    cloud_ref: Optional[str] = None
    contact: ContactDoc
    task: TaskSpec
    start_q: float
    trajectory: TrajectoryDoc
    achieved: float
    success: bool
    epoch: int = 0
    steps: List[StepDoc] = Field(default_factory=list)
    grasp_failed: bool = False
    relabeled: bool = False
    source: str = "rl"
    failure: Optional[str] = None
    config_hash: str = ""

    @property
    def object_id(self) -> str:
        return self.shape.object_id


class TrainingPair(BaseModel):
    record: InteractionRecord
    label: Label
    negative_kind: NegativeKind = "none"
