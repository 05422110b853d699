from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence

from prior_engine.config import Settings, config_hash, settings
from prior_engine.errors import PreconditionError
from prior_engine.explorer.buffer import BufferWriter, ReplayBuffer
from prior_engine.explorer.episode import CuriosityFn, Rollout, her_rollout, rollout
from prior_engine.explorer.tasks import TaskSample, sample_training_task
from prior_engine.explorer.td3 import PolicyFn, TD3Agent, load_agent, save_agent, td3_update
from prior_engine.sim.engine import reset_episode
from prior_engine.sim.shapes import ArticulatedObject
from prior_engine.utils.seeding import derive_seed

log = logging.getLogger("prior_engine.explorer")

CuriosityFactory = Callable[[TaskSample], CuriosityFn]


def policy_key(interaction_type: str, joint_type: str) -> str:
    return f"{interaction_type}-{joint_type}"


@dataclass
class TrainingSummary:
    key: str
    episodes: int
    success_rate: float
    history: List[float] = field(default_factory=list)
    last_critic_loss: Optional[float] = None


class ExplorerTrainer:
    """One policy per (interaction type, joint type) over a single-joint-family fleet."""

    def __init__(self, fleet: Sequence[ArticulatedObject], interaction_type: str, seed: int = 0,
                 cfg: Optional[Settings] = None, agent: Optional[TD3Agent] = None):
        self.cfg = cfg or settings
        joint_types = {o.joint_type for o in fleet}
        if len(joint_types) != 1:
            raise PreconditionError(f"explorer fleet must hold exactly one joint type, got {sorted(joint_types)}")
        self.fleet = list(fleet)
        self.joint_type = joint_types.pop()
        self.interaction_type = interaction_type
        self.key = policy_key(interaction_type, self.joint_type)
        self.seed = seed
        self.agent = agent or TD3Agent(self.cfg.explorer, seed=seed)
        self.buffer = ReplayBuffer(self.cfg.explorer.buffer_size)
        self.writer = BufferWriter(self.buffer)
        self.config_hash = config_hash(self.cfg)
        self.curiosity_factory: Optional[CuriosityFactory] = None

    def sample(self, episode_seed: int) -> TaskSample:
        return sample_training_task(self.fleet, episode_seed, self.interaction_type, self.cfg)

    def collect(self, episode_seed: int, explore: bool = True, epoch: int = 0,
                policy: Optional[PolicyFn] = None) -> Rollout:
        sample = self.sample(episode_seed)
        env = reset_episode(sample.obj, sample.task, sample.contact, derive_seed(episode_seed, 1),
                            start_q=sample.start_q, sim_cfg=self.cfg.sim)
        curiosity = self.curiosity_factory(sample) if self.curiosity_factory is not None else None
        ro = rollout(
            policy or self.agent.policy(explore=explore), env, sample.task, self.cfg.explorer.max_steps,
            explorer_cfg=self.cfg.explorer, curiosity=curiosity, camera=sample.camera, epoch=epoch,
            config_hash=self.config_hash, cloud_seed=sample.cloud_seed,
        )
        ro.sample = sample
        return ro

    def _store(self, ro: Rollout) -> None:
        self.writer.submit(ro.transitions)
        if self.cfg.explorer.her and not ro.record.success and abs(ro.record.achieved) > 1e-9:
            self.writer.submit(her_rollout(ro).transitions)

    def train(self, episodes: Optional[int] = None, epoch: int = 0,
              on_rollout: Optional[Callable[[Rollout], None]] = None) -> TrainingSummary:
        cfg = self.cfg.explorer
        episodes = episodes if episodes is not None else cfg.episodes
        window: deque = deque(maxlen=cfg.log_every)
        history: List[float] = []
        last_loss = None
        log.info("explorer_train_start key=%s episodes=%d seed=%d config_hash=%s",
                 self.key, episodes, self.seed, self.config_hash)
        for _ in range(episodes):
            ep_seed = derive_seed(self.seed, self.agent.episodes)
            ro = self.collect(ep_seed, explore=True, epoch=epoch)
            self._store(ro)
            self.agent.episodes += 1
            window.append(1.0 if ro.record.success else 0.0)
            if on_rollout is not None:
                on_rollout(ro)
            if len(self.buffer) >= cfg.batch_size:
                for _ in range(cfg.updates_per_episode):
                    last_loss = td3_update(self.buffer, self.agent).critic_loss
            if self.agent.episodes % cfg.log_every == 0:
                rate = sum(window) / len(window)
                history.append(rate)
                log.info("explorer_progress key=%s episodes=%d success_rate=%.3f noise=%.4f critic_loss=%s",
                         self.key, self.agent.episodes, rate, self.agent.exploration_noise(), last_loss)
        rate = sum(window) / len(window) if window else 0.0
        return TrainingSummary(self.key, self.agent.episodes, rate, history, last_loss)

    def evaluate(self, episodes: int, seed: int) -> float:
        """Noise-free success rate on freshly sampled tasks."""
        wins = 0
        for i in range(episodes):
            wins += int(self.collect(derive_seed(seed, 7919, i), explore=False).record.success)
        return wins / max(1, episodes)

    def save(self, path: str | Path) -> Path:
        return save_agent(self.agent, path, self.config_hash, self.key)

    @classmethod
    def load(cls, path: str | Path, fleet: Sequence[ArticulatedObject], interaction_type: str,
             seed: int = 0, cfg: Optional[Settings] = None) -> "ExplorerTrainer":
        cfg = cfg or settings
        agent, meta = load_agent(path, cfg.explorer, expected_hash=config_hash(cfg))
        trainer = cls(fleet, interaction_type, seed, cfg, agent=agent)
        if meta["key"] != trainer.key:
            raise PreconditionError(f"checkpoint holds policy {meta['key']}, expected {trainer.key}")
        return trainer
