from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import torch

from prior_engine.compute.trajectory import Trajectory, deserialize_trajectory, serialize_trajectory
from prior_engine.config import PerceptionSettings, settings
from prior_engine.errors import PreconditionError
from prior_engine.perception.data import PerceptionSample, collate
from prior_engine.perception.networks import (
    LATENT_DIM,
    ActionabilityNet,
    PerceptionFeatures,
    ProposalNet,
    ScorerNet,
)
from prior_engine.perception.pointnet import PointNet2Seg
from prior_engine.utils.seeding import torch_generator, torch_seeded

log = logging.getLogger("prior_engine.perception")

BUNDLE_VERSION = 1


def _points_tensor(points) -> torch.Tensor:
    pts = getattr(points, "points", points)
    return torch.as_tensor(np.asarray(pts, dtype=np.float32))


@torch.no_grad()
def encode_pointcloud(encoder: PointNet2Seg, cloud) -> np.ndarray:
    """Per-point features [N, 128] for a PointCloud or an [N, 3] array."""
    return encoder(_points_tensor(cloud).unsqueeze(0))[0].numpy()


@torch.no_grad()
def predict_actionability(net: ActionabilityNet, feats: PerceptionFeatures) -> torch.Tensor:
    return net.score_features(feats)


@torch.no_grad()
def score_trajectory(net: ScorerNet, feats: PerceptionFeatures, traj: torch.Tensor) -> torch.Tensor:
    return torch.sigmoid(net.logits_features(feats, traj))


def _repeat(feats: PerceptionFeatures, k: int) -> PerceptionFeatures:
    return PerceptionFeatures(feats.f_s.expand(k, -1), feats.f_p.expand(k, -1), feats.f_theta.expand(k, -1))


@torch.no_grad()
def decode_proposals(net: ProposalNet, feats: PerceptionFeatures, k: int, seed: int) -> torch.Tensor:
    """k raw 30-vectors decoded from standard-normal latents; feats is a batch of one."""
    z = torch.randn((k, LATENT_DIM), generator=torch_generator(seed))
    return net.decode(z, _repeat(feats, k))


def propose_trajectories(net: ProposalNet, feats: PerceptionFeatures, k: int, seed: int,
                         interaction_type: str, pad_tol: float = 1e-3) -> List[Trajectory]:
    vecs = decode_proposals(net, feats, k, seed).numpy().astype(np.float64)
    return [deserialize_trajectory(v, interaction_type, pad_tol=pad_tol) for v in vecs]


class PerceptionBundle:
    """The three trained heads for one (interaction type, joint type) pair."""

    def __init__(self, key: str = "push-prismatic", seed: int = 0, config_hash: str = "",
                 cfg: Optional[PerceptionSettings] = None):
        self.key = key
        self.seed = seed
        self.config_hash = config_hash
        self.cfg = cfg or settings.perception
        with torch_seeded(seed):
            self.scorer = ScorerNet(self.cfg.min_points)
            self.proposal = ProposalNet(self.cfg.min_points)
            self.actionability = ActionabilityNet(self.cfg.min_points)

    @property
    def interaction_type(self) -> str:
        return self.key.split("-", 1)[0]

    def eval(self) -> "PerceptionBundle":
        for net in (self.scorer, self.proposal, self.actionability):
            net.eval()
        return self

    # -------------------------
    # Inference on clouds
    # -------------------------
    @torch.no_grad()
    def score_samples(self, samples: Sequence[PerceptionSample], batch_size: int = 64) -> np.ndarray:
        out = []
        for i in range(0, len(samples), batch_size):
            b = collate(samples[i:i + batch_size])
            out.append(self.scorer(b["points"], b["point_index"], b["contact"], b["theta"], b["traj"]).numpy())
        return np.concatenate(out) if out else np.zeros(0)

    @torch.no_grad()
    def score_trajectories(self, points, point_index: int, theta: float,
                           trajectories: Sequence[Trajectory]) -> np.ndarray:
        pts = _points_tensor(points).unsqueeze(0)
        idx = torch.tensor([point_index])
        feats = self.scorer.cond(pts, idx, pts[0, idx], torch.tensor([float(theta)]))
        vecs = torch.from_numpy(np.stack([serialize_trajectory(t) for t in trajectories]).astype(np.float32))
        return score_trajectory(self.scorer, _repeat(feats, len(trajectories)), vecs).numpy()

    @torch.no_grad()
    def propose(self, points, point_index: int, theta: float, k: int, seed: int) -> List[Trajectory]:
        pts = _points_tensor(points).unsqueeze(0)
        idx = torch.tensor([point_index])
        feats = self.proposal.cond(pts, idx, pts[0, idx], torch.tensor([float(theta)]))
        return propose_trajectories(self.proposal, feats, k, seed, self.interaction_type, self.cfg.pad_tolerance)

    @torch.no_grad()
    def actionability_map(self, points, theta: float) -> np.ndarray:
        return self.actionability.score_map(_points_tensor(points), theta).numpy()

    @torch.no_grad()
    def trajectory_score_map(self, points, theta: float, trajectory: Trajectory, anchor: int) -> np.ndarray:
        """Scorer output for `trajectory` translated to every point, keeping its offset from point `anchor`."""
        pts = _points_tensor(points)
        n = pts.shape[0]
        vec = torch.from_numpy(serialize_trajectory(trajectory).astype(np.float32))
        trajs = vec.repeat(n, 1)
        trajs[:, :3] = vec[:3] + (pts - pts[anchor])
        f_all = self.scorer.cond.per_point(pts.unsqueeze(0))[0]
        f_p, f_theta = self.scorer.cond.task_point(pts, torch.full((n,), float(theta)))
        return torch.sigmoid(self.scorer.logits_features(PerceptionFeatures(f_all, f_p, f_theta), trajs)).numpy()

    # -------------------------
    # Persistence
    # -------------------------
    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save({
            "format_version": BUNDLE_VERSION,
            "key": self.key,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "scorer": self.scorer.state_dict(),
            "proposal": self.proposal.state_dict(),
            "actionability": self.actionability.state_dict(),
        }, path)
        log.info("bundle_saved key=%s path=%s config_hash=%s", self.key, path, self.config_hash)
        return path

    @classmethod
    def load(cls, path: str | Path, expected_hash: Optional[str] = None,
             cfg: Optional[PerceptionSettings] = None) -> "PerceptionBundle":
        payload = torch.load(Path(path), map_location="cpu", weights_only=False)
        if payload.get("format_version") != BUNDLE_VERSION:
            raise PreconditionError(f"unsupported bundle version {payload.get('format_version')}")
        if expected_hash is not None and payload["config_hash"] != expected_hash:
            raise PreconditionError(f"bundle config hash {payload['config_hash']} does not match {expected_hash}")
        bundle = cls(payload["key"], payload["seed"], payload["config_hash"], cfg)
        bundle.scorer.load_state_dict(payload["scorer"])
        bundle.proposal.load_state_dict(payload["proposal"])
        bundle.actionability.load_state_dict(payload["actionability"])
        return bundle.eval()


def sample_contact(scores: np.ndarray, mode: str = "argmax", seed: int = 0,
                   mask: Optional[np.ndarray] = None) -> int:
    """Pick a contact index from actionability scores (argmax or score-proportional)."""
    scores = np.asarray(scores, dtype=np.float64)
    valid = np.ones_like(scores, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if not valid.any():
        raise PreconditionError("no candidate points to pick a contact from")
    masked = np.where(valid, scores, -np.inf)
    if mode == "argmax":
        return int(np.argmax(masked))
    if mode != "proportional":
        raise ValueError(f"unknown contact mode {mode!r}")
    weights = np.where(valid, np.clip(scores, 0.0, None), 0.0)
    total = weights.sum()
    if total <= 0:
        weights = valid.astype(np.float64)
        total = weights.sum()
    return int(np.random.default_rng(seed).choice(len(scores), p=weights / total))
