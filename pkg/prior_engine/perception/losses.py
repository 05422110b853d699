from __future__ import annotations

import torch
import torch.nn.functional as F

from prior_engine.compute.rotations import euler_xyz_to_matrix_torch, rot6d_from_matrix_torch
from prior_engine.compute.trajectory import MAX_WAYPOINTS, SLOT_DIM


def _slots(traj: torch.Tensor) -> torch.Tensor:
    return traj.reshape(*traj.shape[:-1], MAX_WAYPOINTS, SLOT_DIM)


def position_l1(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean absolute error of the position entries (slot 0 absolute, others residual)."""
    return (_slots(pred)[..., :3] - _slots(target)[..., :3]).abs().mean()


def absolute_rot6d(traj: torch.Tensor) -> torch.Tensor:
    """Accumulated euler residuals -> per-slot absolute 6D orientation [..., 5, 6]."""
    eulers = torch.cumsum(_slots(traj)[..., 3:], dim=-2)
    return rot6d_from_matrix_torch(euler_xyz_to_matrix_torch(eulers))


def rotation_6d_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    return (absolute_rot6d(pred) - absolute_rot6d(target)).abs().mean()


def kl_divergence(mu: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    """KL(N(mu, sigma^2) || N(0, I)), summed over latent dims, averaged over the batch."""
    return (-0.5 * (1.0 + logvar - mu.pow(2) - logvar.exp()).sum(dim=-1)).mean()


def kl_weight(epoch: int, epochs: int, beta: float, warmup_frac: float) -> float:
    """Linear warm-up of the KL weight over the first `warmup_frac` of training."""
    warm = int(round(warmup_frac * epochs))
    if warm <= 0:
        return beta
    return beta * min(1.0, (epoch + 1) / warm)


def scorer_bce(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    return F.binary_cross_entropy_with_logits(logits, labels)


def actionability_target(scores: torch.Tensor, k: int = 5) -> torch.Tensor:
    """Mean of the k highest proposal scores along the last dim."""
    k = min(k, scores.shape[-1])
    return torch.topk(scores, k, dim=-1).values.mean(dim=-1)
