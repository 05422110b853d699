from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from prior_engine.errors import TaskSpecError

SUCCESS_BONUS = 500.0
GUIDANCE_WEIGHT = 300.0
FAR_PENALTY = 300.0
FAR_DISTANCE = 0.1
DISTANCE_WEIGHT = 150.0
CURIOSITY_WEIGHT = 500.0


@dataclass(frozen=True)
class RewardTerms:
    """Signed reward components; `total` is their exact sum."""

    success: float
    guidance: float
    distance: float
    curiosity: float = 0.0

    @property
    def total(self) -> float:
        return self.success + self.guidance + self.distance + self.curiosity


def reward_terms(prev_dtheta: float, new_dtheta: float, theta: float, d_gc: float, done_success: bool,
                 curiosity_score: Optional[float] = None, curiosity_weight: float = CURIOSITY_WEIGHT) -> RewardTerms:
    if theta == 0:
        raise TaskSpecError("reward undefined for theta = 0")
    success = SUCCESS_BONUS if done_success else 0.0
    guidance = GUIDANCE_WEIGHT * (abs(theta - prev_dtheta) - abs(theta - new_dtheta))
    distance = -(FAR_PENALTY * float(d_gc > FAR_DISTANCE) + DISTANCE_WEIGHT * d_gc)
    curiosity = -curiosity_weight * curiosity_score if curiosity_score is not None else 0.0
    return RewardTerms(success, guidance, distance, curiosity)


def compute_reward(prev_dtheta: float, new_dtheta: float, theta: float, d_gc: float, done_success: bool,
                   curiosity_score: Optional[float] = None, curiosity_weight: float = CURIOSITY_WEIGHT) -> float:
    return reward_terms(prev_dtheta, new_dtheta, theta, d_gc, done_success, curiosity_score, curiosity_weight).total
