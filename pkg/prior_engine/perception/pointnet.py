"""Single-scale-grouping PointNet++ segmentation backbone (per-point features).

Sampling starts from the point farthest from the centroid and grouping takes
the k nearest neighbours inside the radius, so row order of the input never
influences which points are chosen.
"""
from __future__ import annotations

from typing import List, Sequence

import torch
import torch.nn as nn

from prior_engine.errors import PreconditionError

FEATURE_DIM = 128
# second set-abstraction level samples 64 centroids
MIN_POINTS = 64


def pairwise_sq_dist(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """[B, N, 3] x [B, M, 3] -> [B, N, M], computed elementwise."""
    return (a.unsqueeze(2) - b.unsqueeze(1)).pow(2).sum(-1)


def gather_points(points: torch.Tensor, idx: torch.Tensor) -> torch.Tensor:
    """points [B, N, C], idx [B, ...] -> [B, ..., C]."""
    B = points.shape[0]
    flat = idx.reshape(B, -1)
    out = torch.gather(points, 1, flat.unsqueeze(-1).expand(-1, -1, points.shape[-1]))
    return out.reshape(*idx.shape, points.shape[-1])


def farthest_point_sample(xyz: torch.Tensor, npoint: int) -> torch.Tensor:
    B, N, _ = xyz.shape
    centroid = xyz.mean(dim=1, keepdim=True)
    farthest = (xyz - centroid).pow(2).sum(-1).argmax(dim=1)
    chosen = torch.zeros(B, npoint, dtype=torch.long, device=xyz.device)
    distance = torch.full((B, N), float("inf"), device=xyz.device)
    batch = torch.arange(B, device=xyz.device)
    for i in range(npoint):
        chosen[:, i] = farthest
        d = (xyz - xyz[batch, farthest].unsqueeze(1)).pow(2).sum(-1)
        distance = torch.minimum(distance, d)
        farthest = distance.argmax(dim=1)
    return chosen


def knn_in_radius(radius: float, nsample: int, xyz: torch.Tensor, centers: torch.Tensor) -> torch.Tensor:
    """k nearest neighbours of each center; those beyond the radius fall back to the nearest."""
    d = pairwise_sq_dist(centers, xyz)
    k = min(nsample, xyz.shape[1])
    dist, idx = torch.topk(d, k, dim=-1, largest=False)
    nearest = idx[..., :1].expand_as(idx)
    return torch.where(dist > radius ** 2, nearest, idx)


class SetAbstraction(nn.Module):
    def __init__(self, npoint: int, radius: float, nsample: int, in_channel: int, mlp: Sequence[int],
                 group_all: bool = False):
        super().__init__()
        self.npoint, self.radius, self.nsample, self.group_all = npoint, radius, nsample, group_all
        layers: List[nn.Module] = []
        last = in_channel + 3
        for width in mlp:
            layers += [nn.Linear(last, width), nn.ReLU()]
            last = width
        self.mlp = nn.Sequential(*layers)
        self.out_channel = last

    def forward(self, xyz: torch.Tensor, feats: torch.Tensor | None):
        if self.group_all:
            centers = xyz.mean(dim=1, keepdim=True)
            grouped = (xyz - centers).unsqueeze(1)
            if feats is not None:
                grouped = torch.cat([grouped, feats.unsqueeze(1)], dim=-1)
            return centers, self.mlp(grouped).max(dim=2)[0]
        npoint = min(self.npoint, xyz.shape[1])
        centers = gather_points(xyz, farthest_point_sample(xyz, npoint))
        idx = knn_in_radius(self.radius, self.nsample, xyz, centers)
        grouped = gather_points(xyz, idx) - centers.unsqueeze(2)
        if feats is not None:
            grouped = torch.cat([grouped, gather_points(feats, idx)], dim=-1)
        return centers, self.mlp(grouped).max(dim=2)[0]


class FeaturePropagation(nn.Module):
    def __init__(self, in_channel: int, mlp: Sequence[int]):
        super().__init__()
        layers: List[nn.Module] = []
        last = in_channel
        for width in mlp:
            layers += [nn.Linear(last, width), nn.ReLU()]
            last = width
        self.mlp = nn.Sequential(*layers)

    def forward(self, xyz_dense: torch.Tensor, xyz_sparse: torch.Tensor,
                feats_dense: torch.Tensor | None, feats_sparse: torch.Tensor) -> torch.Tensor:
        S = xyz_sparse.shape[1]
        if S == 1:
            interp = feats_sparse.expand(-1, xyz_dense.shape[1], -1)
        else:
            d = pairwise_sq_dist(xyz_dense, xyz_sparse)
            dist, idx = torch.topk(d, min(3, S), dim=-1, largest=False)
            w = 1.0 / (dist + 1e-8)
            w = w / w.sum(dim=-1, keepdim=True)
            interp = (gather_points(feats_sparse, idx) * w.unsqueeze(-1)).sum(dim=2)
        if feats_dense is not None:
            interp = torch.cat([feats_dense, interp], dim=-1)
        return self.mlp(interp)


class PointNet2Seg(nn.Module):
    """[B, N, 3] -> [B, N, 128]."""

    def __init__(self, feat_dim: int = FEATURE_DIM, min_points: int = MIN_POINTS):
        super().__init__()
        if min_points < MIN_POINTS:
            raise PreconditionError(f"min_points must be at least {MIN_POINTS}, got {min_points}")
        self.min_points = min_points
        self.sa1 = SetAbstraction(256, 0.1, 32, 0, [32, 32, 64])
        self.sa2 = SetAbstraction(64, 0.2, 32, 64, [64, 64, 128])
        self.sa3 = SetAbstraction(1, 0.0, 0, 128, [128, 256], group_all=True)
        self.fp3 = FeaturePropagation(256 + 128, [256, 128])
        self.fp2 = FeaturePropagation(128 + 64, [128, 128])
        self.fp1 = FeaturePropagation(128, [128, 128])
        self.head = nn.Linear(128, feat_dim)

    def forward(self, xyz: torch.Tensor) -> torch.Tensor:
        if xyz.dim() != 3 or xyz.shape[-1] != 3:
            raise PreconditionError(f"expected [B, N, 3] points, got {tuple(xyz.shape)}")
        if xyz.shape[1] < self.min_points:
            raise PreconditionError(f"point cloud needs at least {self.min_points} points, got {xyz.shape[1]}")
        l1_xyz, l1 = self.sa1(xyz, None)
        l2_xyz, l2 = self.sa2(l1_xyz, l1)
        l3_xyz, l3 = self.sa3(l2_xyz, l2)
        l2 = self.fp3(l2_xyz, l3_xyz, l2, l3)
        l1 = self.fp2(l1_xyz, l2_xyz, l1, l2)
        l0 = self.fp1(xyz, l1_xyz, None, l1)
        return self.head(l0)
