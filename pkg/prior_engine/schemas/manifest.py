from __future__ import annotations

from typing import Dict, List, Literal

from pydantic import BaseModel, Field

SplitTag = Literal["train-cat/train-shape", "train-cat/test-shape", "test-cat"]

MANIFEST_VERSION = 1


class ManifestEntry(BaseModel):
    path: str
    count: int
    sha256: str


class DatasetManifest(BaseModel):
    version: int = MANIFEST_VERSION
    split: SplitTag = "train-cat/train-shape"
    config_hash: str
    seed: int
    shards: List[ManifestEntry] = Field(default_factory=list)
    counts: Dict[str, int] = Field(default_factory=dict)
    object_ids: List[str] = Field(default_factory=list)
    created_at: str = ""
