from __future__ import annotations

import tomllib
from pathlib import Path
from typing import Any, Dict, Iterable, Literal, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from prior_engine.utils.hashing import sha256_inputs

TrainingOrder = Literal["scorer-proposal-actionability", "scorer-joint"]
ContactMode = Literal["argmax", "proportional"]


class SimSettings(BaseModel):
    render_resolution: int = Field(default=168, ge=16)
    fov_deg: float = Field(default=75.0, gt=0.0, lt=180.0)
    n_points: int = Field(default=1024, ge=1)
    camera_distance: float = 1.0
    azimuth_range_deg: Tuple[float, float] = (-90.0, 90.0)
    elevation_range_deg: Tuple[float, float] = (30.0, 60.0)

    # gripper / contact model
    approach_offset: float = 0.02
    cone_half_angle_deg: float = 30.0
    finger_max_opening: float = 0.08
    grasp_reach: float = 0.03
    contact_break: float = 0.01
    lateral_tolerance: float = 0.03
    grasp_slip: float = 0.05
    substep: float = 0.005
    success_tolerance: float = 0.15


class ExplorerSettings(BaseModel):
    buffer_size: int = Field(default=2048, ge=1)
    batch_size: int = Field(default=512, ge=1)
    lr: float = 1e-4
    noise_init: float = 0.1
    noise_decay: float = 0.5
    noise_decay_every: int = 500
    epoch_episodes: int = 100
    max_steps: int = Field(default=5, ge=2, le=5)
    hidden: int = 512

    # common TD3 values; not tuned for this task
    gamma: float = 0.99
    tau: float = 0.005
    policy_delay: int = 2
    policy_noise: float = 0.2
    noise_clip: float = 0.5

    max_delta_pos: float = 0.1
    max_delta_euler: float = 0.5
    revolute_task_range_deg: Tuple[float, float] = (10.0, 70.0)
    prismatic_task_range: Tuple[float, float] = (0.1, 0.7)
    her: bool = True
    updates_per_episode: int = 1
    episodes: int = 2000
    log_every: int = 100
    curiosity_weight: float = 500.0


class PerceptionSettings(BaseModel):
    lr: float = 1e-3
    batch_size: int = 32
    kl_beta: float = 1.0
    kl_warmup_frac: float = 0.1
    l1_weight: float = 1.0
    rot_weight: float = 1.0
    n_positive: int = 500
    n_negative: int = 500
    proposals_per_point: int = 100
    top_k: int = 5
    grasp_failure_ratio: float = 0.5
    revolute_offset_cap_deg: float = 45.0
    prismatic_offset_cap: float = 0.45
    offset_floor_frac: float = 0.1
    pad_tolerance: float = 1e-3
    min_points: int = Field(default=64, ge=64)
    training_order: TrainingOrder = "scorer-proposal-actionability"
    scorer_epochs: int = 20
    proposal_epochs: int = 20
    actionability_epochs: int = 10
    finetune_epochs: int = 5
    contact_mode: ContactMode = "argmax"


class DataSettings(BaseModel):
    root: str = "./data"
    shapes_per_style: int = 40
    train_shape_ratio: float = Field(default=0.75, gt=0.0, lt=1.0)
    test_category_ratio: float = Field(default=0.3, ge=0.0, lt=1.0)
    success_floor: float = 0.01
    attempts_factor: int = 10
    workers: int = Field(default=1, ge=1)
    collect_noise: float = 0.05


class EvaluationSettings(BaseModel):
    coverage_threshold: float = 10.0
    n_tasks: int = 50
    n_positive: int = 50
    n_negative: int = 50
    runs: int = 10
    proposals: int = 100
    score_threshold: float = 0.5


class PipelineSettings(BaseModel):
    run_dir: str = "./runs/default"
    seed: int = 0
    category: Literal["door", "drawer"] = "drawer"
    interaction_type: Literal["push", "pull"] = "push"
    curiosity_epochs: int = 4
    curiosity_episodes_per_epoch: int = 200
    visual_proposals: int = 3


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="PRIOR_", env_nested_delimiter="__", extra="ignore")

    sim: SimSettings = Field(default_factory=SimSettings)
    explorer: ExplorerSettings = Field(default_factory=ExplorerSettings)
    perception: PerceptionSettings = Field(default_factory=PerceptionSettings)
    data: DataSettings = Field(default_factory=DataSettings)
    evaluation: EvaluationSettings = Field(default_factory=EvaluationSettings)
    pipeline: PipelineSettings = Field(default_factory=PipelineSettings)

    # PRIOR_DATA_ROOT / PRIOR_RUN_DIR shortcuts
    data_root: Optional[str] = None
    run_dir: Optional[str] = None

    @field_validator("data_root", "run_dir", mode="before")
    @classmethod
    def _clean_path(cls, value):
        if value is None:
            return None
        if isinstance(value, str):
            cleaned = value.strip()
            return cleaned or None
        return value

    @model_validator(mode="after")
    def _apply_path_shortcuts(self) -> "Settings":
        if self.data_root:
            self.data.root = self.data_root
        if self.run_dir:
            self.pipeline.run_dir = self.run_dir
        return self


def _coerce(raw: str) -> Any:
    lowered = raw.strip().lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            continue
    if raw.startswith("[") and raw.endswith("]"):
        return [_coerce(part) for part in raw[1:-1].split(",") if part.strip()]
    return raw


def apply_overrides(data: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """Apply `section.key=value` overrides onto a nested dict (in place)."""
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override must look like section.key=value, got {item!r}")
        path, raw = item.split("=", 1)
        keys = [k for k in path.strip().split(".") if k]
        if not keys:
            raise ValueError(f"empty override key in {item!r}")
        node = data
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ValueError(f"override {item!r} descends into a non-section value")
        node[keys[-1]] = _coerce(raw)
    return data


def load_settings(path: Optional[str | Path] = None, overrides: Iterable[str] = ()) -> Settings:
    data: Dict[str, Any] = {}
    if path is not None:
        with open(path, "rb") as handle:
            data = tomllib.load(handle)
    apply_overrides(data, overrides)
    return Settings(**data)


def config_hash(cfg: Settings) -> str:
    payload = cfg.model_dump(mode="json", exclude={"data_root": True, "run_dir": True})
    payload["data"].pop("root", None)
    payload["pipeline"].pop("run_dir", None)
    return sha256_inputs(payload)[:16]


settings = Settings()
