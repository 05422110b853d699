from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import torch
import torch.nn as nn

from prior_engine.compute.trajectory import TRAJ_DIM
from prior_engine.perception.pointnet import FEATURE_DIM, MIN_POINTS, PointNet2Seg

POINT_DIM = 32
TRAJ_FEAT_DIM = 128
TASK_DIM = 32
LATENT_DIM = 128
COND_DIM = FEATURE_DIM + POINT_DIM + TASK_DIM  # 192


def mlp(sizes: Sequence[int]) -> nn.Sequential:
    layers: List[nn.Module] = []
    for a, b in zip(sizes[:-2], sizes[1:-1]):
        layers += [nn.Linear(a, b), nn.LeakyReLU(0.01)]
    layers.append(nn.Linear(sizes[-2], sizes[-1]))
    return nn.Sequential(*layers)


@dataclass
class PerceptionFeatures:
    f_s: torch.Tensor  # [B, 128] at the contact point
    f_p: torch.Tensor  # [B, 32]
    f_theta: torch.Tensor  # [B, 32]

    def cond(self) -> torch.Tensor:
        return torch.cat([self.f_s, self.f_p, self.f_theta], dim=-1)


class ConditionEncoder(nn.Module):
    """Backbone plus contact-point and task encoders."""

    def __init__(self, min_points: int = MIN_POINTS):
        super().__init__()
        self.backbone = PointNet2Seg(min_points=min_points)
        self.point_enc = nn.Linear(3, POINT_DIM)
        self.task_enc = nn.Linear(1, TASK_DIM)

    def per_point(self, points: torch.Tensor) -> torch.Tensor:
        return self.backbone(points)

    def task_point(self, contact: torch.Tensor, theta: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        return self.point_enc(contact), self.task_enc(theta.reshape(-1, 1))

    def forward(self, points: torch.Tensor, point_index: torch.Tensor, contact: torch.Tensor,
                theta: torch.Tensor) -> PerceptionFeatures:
        f_all = self.per_point(points)
        f_s = f_all[torch.arange(points.shape[0]), point_index]
        f_p, f_theta = self.task_point(contact, theta)
        return PerceptionFeatures(f_s, f_p, f_theta)


class TrajectoryEncoder(nn.Module):
    def __init__(self):
        super().__init__()
        self.net = mlp([TRAJ_DIM, 128, 128, TRAJ_FEAT_DIM])

    def forward(self, traj: torch.Tensor) -> torch.Tensor:
        return self.net(traj)


class ActionabilityNet(nn.Module):
    def __init__(self, min_points: int = MIN_POINTS):
        super().__init__()
        self.cond = ConditionEncoder(min_points)
        self.head = mlp([COND_DIM, 128, 128, 128, 128, 1])

    def score_features(self, feats: PerceptionFeatures) -> torch.Tensor:
        return torch.sigmoid(self.head(feats.cond())).squeeze(-1)

    def forward(self, points, point_index, contact, theta) -> torch.Tensor:
        return self.score_features(self.cond(points, point_index, contact, theta))

    def score_map(self, points: torch.Tensor, theta: float) -> torch.Tensor:
        """Actionability for every point of one cloud [N, 3] -> [N]."""
        f_all = self.cond.per_point(points.unsqueeze(0))[0]
        n = points.shape[0]
        f_p, f_theta = self.cond.task_point(points, torch.full((n,), float(theta)))
        return self.score_features(PerceptionFeatures(f_all, f_p, f_theta))


class ScorerNet(nn.Module):
    def __init__(self, min_points: int = MIN_POINTS):
        super().__init__()
        self.cond = ConditionEncoder(min_points)
        self.traj_enc = TrajectoryEncoder()
        self.head = mlp([COND_DIM + TRAJ_FEAT_DIM, 128, 1])

    def logits_features(self, feats: PerceptionFeatures, traj: torch.Tensor) -> torch.Tensor:
        return self.head(torch.cat([feats.cond(), self.traj_enc(traj)], dim=-1)).squeeze(-1)

    def logits(self, points, point_index, contact, theta, traj) -> torch.Tensor:
        return self.logits_features(self.cond(points, point_index, contact, theta), traj)

    def forward(self, points, point_index, contact, theta, traj) -> torch.Tensor:
        return torch.sigmoid(self.logits(points, point_index, contact, theta, traj))


class ProposalNet(nn.Module):
    """Conditional VAE over serialized trajectories."""

    def __init__(self, min_points: int = MIN_POINTS):
        super().__init__()
        self.cond = ConditionEncoder(min_points)
        self.traj_enc = TrajectoryEncoder()
        self.encoder = mlp([TRAJ_FEAT_DIM + COND_DIM, 128, 128, 2 * LATENT_DIM])
        self.decoder = mlp([LATENT_DIM + COND_DIM, 512, 256, TRAJ_DIM])

    def encode(self, feats: PerceptionFeatures, traj: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        stats = self.encoder(torch.cat([self.traj_enc(traj), feats.cond()], dim=-1))
        mu, logvar = stats.chunk(2, dim=-1)
        return mu, logvar.clamp(-20.0, 20.0)

    def decode(self, z: torch.Tensor, feats: PerceptionFeatures) -> torch.Tensor:
        return self.decoder(torch.cat([z, feats.cond()], dim=-1))

    def forward(self, points, point_index, contact, theta, traj, generator: torch.Generator | None = None):
        feats = self.cond(points, point_index, contact, theta)
        mu, logvar = self.encode(feats, traj)
        eps = torch.randn(mu.shape, generator=generator)
        z = mu + eps * torch.exp(0.5 * logvar)
        return self.decode(z, feats), mu, logvar
