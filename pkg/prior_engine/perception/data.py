"""Perception training samples built from interaction records."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from prior_engine.compute.trajectory import Trajectory, serialize_trajectory
from prior_engine.config import SimSettings, settings
from prior_engine.errors import DatasetError
from prior_engine.schemas.records import InteractionRecord, TrainingPair
from prior_engine.sim.render import render_pointcloud
from prior_engine.sim.shapes import build_object
from prior_engine.storage.ply import read_cloud_points


@dataclass(eq=False)
class PerceptionSample:
    points: np.ndarray
    point_index: int
    theta: float
    trajectory: np.ndarray
    label: float = 1.0
    interaction_type: str = "push"
    cloud_key: str = ""

    @property
    def contact(self) -> np.ndarray:
        return self.points[self.point_index]


class CloudCache:
    """Point clouds for records: the PLY sidecar when present, else a deterministic re-render."""

    def __init__(self, root: Optional[str | Path] = None, sim_cfg: Optional[SimSettings] = None):
        self.root = Path(root) if root is not None else None
        self.sim = sim_cfg or settings.sim
        self._cache: Dict[Tuple, np.ndarray] = {}

    def points(self, record: InteractionRecord) -> np.ndarray:
        key = (record.shape.object_id, record.start_q, record.cloud_seed,
               record.camera.model_dump_json() if record.camera else "")
        if key not in self._cache:
            self._cache[key] = self._load(record)
        return self._cache[key]

    def _load(self, record: InteractionRecord) -> np.ndarray:
        if record.cloud_ref and self.root is not None and (self.root / record.cloud_ref).exists():
            return read_cloud_points(self.root / record.cloud_ref)
        if record.camera is None:
            raise DatasetError(f"record {record.record_id} has neither a cloud file nor a camera view")
        obj = build_object(record.shape)
        cloud = render_pointcloud(obj, record.start_q, record.camera, self.sim.n_points,
                                  seed=record.cloud_seed, sim_cfg=self.sim)
        return cloud.points.astype(np.float32)


def nearest_index(points: np.ndarray, p: Sequence[float]) -> int:
    return int(np.argmin(np.sum((points - np.asarray(p, dtype=np.float32)) ** 2, axis=1)))


def sample_from_record(record: InteractionRecord, points: np.ndarray, label: float) -> PerceptionSample:
    traj = Trajectory.from_doc(record.trajectory)
    return PerceptionSample(
        points=points,
        point_index=nearest_index(points, record.contact.point),
        theta=float(record.task.theta),
        trajectory=serialize_trajectory(traj).astype(np.float32),
        label=label,
        interaction_type=record.task.interaction_type,
        cloud_key=f"{record.object_id}:{record.cloud_seed}:{record.start_q:.9f}",
    )


def samples_from_pairs(pairs: Sequence[TrainingPair], cache: CloudCache) -> List[PerceptionSample]:
    return [
        sample_from_record(p.record, cache.points(p.record), 1.0 if p.label == "positive" else 0.0)
        for p in pairs
    ]


def collate(samples: Sequence[PerceptionSample]) -> Dict[str, torch.Tensor]:
    points = torch.from_numpy(np.stack([s.points for s in samples]).astype(np.float32))
    index = torch.tensor([s.point_index for s in samples], dtype=torch.long)
    return {
        "points": points,
        "point_index": index,
        "contact": points[torch.arange(len(samples)), index],
        "theta": torch.tensor([s.theta for s in samples], dtype=torch.float32),
        "traj": torch.from_numpy(np.stack([s.trajectory for s in samples]).astype(np.float32)),
        "label": torch.tensor([s.label for s in samples], dtype=torch.float32),
    }
