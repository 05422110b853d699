"""TD3: twin critics, delayed actor updates, target policy smoothing."""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from prior_engine.config import ExplorerSettings, settings
from prior_engine.errors import PreconditionError
from prior_engine.explorer.buffer import ReplayBuffer
from prior_engine.explorer.state import STATE_DIM
from prior_engine.utils.seeding import torch_generator, torch_seeded

log = logging.getLogger("prior_engine.explorer")

ACTION_DIM = 6
CHECKPOINT_VERSION = 1

PolicyFn = Callable[[np.ndarray], np.ndarray]


def _mlp(sizes, out_act: Optional[nn.Module] = None) -> nn.Sequential:
    layers = []
    for a, b in zip(sizes[:-2], sizes[1:-1]):
        layers += [nn.Linear(a, b), nn.ReLU()]
    layers.append(nn.Linear(sizes[-2], sizes[-1]))
    if out_act is not None:
        layers.append(out_act)
    return nn.Sequential(*layers)


class Actor(nn.Module):
    """4 hidden layers, separate heads for the position and euler residuals."""

    def __init__(self, state_dim: int = STATE_DIM, hidden: int = 512):
        super().__init__()
        self.trunk = nn.Sequential(
            nn.Linear(state_dim, hidden), nn.ReLU(),
            nn.Linear(hidden, hidden), nn.ReLU(),
            nn.Linear(hidden, hidden), nn.ReLU(),
            nn.Linear(hidden, hidden), nn.ReLU(),
        )
        self.pos_head = nn.Linear(hidden, 3)
        self.euler_head = nn.Linear(hidden, 3)

    def forward(self, state: torch.Tensor) -> torch.Tensor:
        h = self.trunk(state)
        return torch.tanh(torch.cat([self.pos_head(h), self.euler_head(h)], dim=-1))


class Critic(nn.Module):
    def __init__(self, state_dim: int = STATE_DIM, action_dim: int = ACTION_DIM, hidden: int = 512):
        super().__init__()
        self.net = _mlp([state_dim + action_dim, hidden, hidden, hidden, 1])

    def forward(self, state: torch.Tensor, action: torch.Tensor) -> torch.Tensor:
        return self.net(torch.cat([state, action], dim=-1))


@dataclass
class LossReport:
    critic_loss: float
    actor_loss: Optional[float]
    q_mean: float
    updates: int


class TD3Agent:
    def __init__(self, cfg: Optional[ExplorerSettings] = None, seed: int = 0,
                 state_dim: int = STATE_DIM, action_dim: int = ACTION_DIM):
        self.cfg = cfg or settings.explorer
        with torch_seeded(seed):
            self.actor = Actor(state_dim, self.cfg.hidden)
            self.critic1 = Critic(state_dim, action_dim, self.cfg.hidden)
            self.critic2 = Critic(state_dim, action_dim, self.cfg.hidden)
        self.actor_target = copy.deepcopy(self.actor)
        self.critic1_target = copy.deepcopy(self.critic1)
        self.critic2_target = copy.deepcopy(self.critic2)
        self.actor_opt = torch.optim.Adam(self.actor.parameters(), lr=self.cfg.lr)
        self.critic_opt = torch.optim.Adam(
            list(self.critic1.parameters()) + list(self.critic2.parameters()), lr=self.cfg.lr
        )
        self.rng = np.random.default_rng(seed)
        self.generator = torch_generator(seed)
        self.updates = 0
        self.episodes = 0

    # -------------------------
    # Acting
    # -------------------------
    def exploration_noise(self) -> float:
        epoch = self.episodes // max(1, self.cfg.epoch_episodes)
        return self.cfg.noise_init * self.cfg.noise_decay ** (epoch // max(1, self.cfg.noise_decay_every))

    @torch.no_grad()
    def act(self, state: np.ndarray, explore: bool = False) -> np.ndarray:
        a = self.actor(torch.as_tensor(state, dtype=torch.float32).unsqueeze(0))[0].numpy().astype(np.float64)
        if explore:
            a = a + self.rng.normal(0.0, self.exploration_noise(), size=a.shape)
        return np.clip(a, -1.0, 1.0)

    def policy(self, explore: bool = False) -> PolicyFn:
        return lambda s: self.act(s, explore=explore)

    def frozen_policy(self) -> PolicyFn:
        """Immutable snapshot for concurrent collectors."""
        actor = copy.deepcopy(self.actor).eval()
        for p in actor.parameters():
            p.requires_grad_(False)

        def _fn(state: np.ndarray) -> np.ndarray:
            with torch.no_grad():
                out = actor(torch.as_tensor(state, dtype=torch.float32).unsqueeze(0))[0]
            return out.numpy().astype(np.float64)

        return _fn

    def scale_action(self, action: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        return a[:3] * self.cfg.max_delta_pos, a[3:] * self.cfg.max_delta_euler

    # -------------------------
    # Persistence
    # -------------------------
    def state_dict(self) -> Dict:
        return {
            "actor": self.actor.state_dict(),
            "critic1": self.critic1.state_dict(),
            "critic2": self.critic2.state_dict(),
            "actor_target": self.actor_target.state_dict(),
            "critic1_target": self.critic1_target.state_dict(),
            "critic2_target": self.critic2_target.state_dict(),
            "actor_opt": self.actor_opt.state_dict(),
            "critic_opt": self.critic_opt.state_dict(),
            "updates": self.updates,
            "episodes": self.episodes,
        }

    def load_state_dict(self, payload: Dict) -> None:
        for name in ("actor", "critic1", "critic2", "actor_target", "critic1_target", "critic2_target"):
            getattr(self, name).load_state_dict(payload[name])
        self.actor_opt.load_state_dict(payload["actor_opt"])
        self.critic_opt.load_state_dict(payload["critic_opt"])
        self.updates = int(payload["updates"])
        self.episodes = int(payload["episodes"])


# -------------------------
# Update steps
# -------------------------
@torch.no_grad()
def target_q(agent: TD3Agent, batch: Dict[str, torch.Tensor]) -> torch.Tensor:
    """y = r + gamma * (1 - done) * min(Q1', Q2')(s', smoothed pi'(s'))."""
    cfg = agent.cfg
    next_action = agent.actor_target(batch["next_state"])
    noise = torch.randn(next_action.shape, generator=agent.generator) * cfg.policy_noise
    next_action = (next_action + noise.clamp(-cfg.noise_clip, cfg.noise_clip)).clamp(-1.0, 1.0)
    q1 = agent.critic1_target(batch["next_state"], next_action)
    q2 = agent.critic2_target(batch["next_state"], next_action)
    return batch["reward"] + cfg.gamma * (1.0 - batch["done"]) * torch.min(q1, q2)


def critic_loss(agent: TD3Agent, batch: Dict[str, torch.Tensor], y: torch.Tensor) -> torch.Tensor:
    q1 = agent.critic1(batch["state"], batch["action"])
    q2 = agent.critic2(batch["state"], batch["action"])
    return F.mse_loss(q1, y) + F.mse_loss(q2, y)


def critic_step(agent: TD3Agent, batch: Dict[str, torch.Tensor], y: torch.Tensor) -> float:
    loss = critic_loss(agent, batch, y)
    agent.critic_opt.zero_grad()
    loss.backward()
    agent.critic_opt.step()
    return float(loss.item())


def actor_step(agent: TD3Agent, batch: Dict[str, torch.Tensor]) -> float:
    loss = -agent.critic1(batch["state"], agent.actor(batch["state"])).mean()
    agent.actor_opt.zero_grad()
    loss.backward()
    agent.actor_opt.step()
    return float(loss.item())


@torch.no_grad()
def soft_update(target: nn.Module, source: nn.Module, tau: float) -> None:
    for t, s in zip(target.parameters(), source.parameters()):
        t.mul_(1.0 - tau).add_(s, alpha=tau)


def td3_update(buffer: ReplayBuffer, agent: TD3Agent, batch_size: Optional[int] = None) -> LossReport:
    if len(buffer) == 0:
        raise PreconditionError("td3 update needs a non-empty replay buffer")
    batch_size = batch_size or agent.cfg.batch_size
    if len(buffer) < batch_size:
        raise PreconditionError(f"buffer holds {len(buffer)} transitions, batch needs {batch_size}")
    batch = buffer.sample(batch_size, agent.rng)
    y = target_q(agent, batch)
    c_loss = critic_step(agent, batch, y)
    agent.updates += 1
    a_loss = None
    if agent.updates % agent.cfg.policy_delay == 0:
        a_loss = actor_step(agent, batch)
        soft_update(agent.actor_target, agent.actor, agent.cfg.tau)
        soft_update(agent.critic1_target, agent.critic1, agent.cfg.tau)
        soft_update(agent.critic2_target, agent.critic2, agent.cfg.tau)
    return LossReport(critic_loss=c_loss, actor_loss=a_loss, q_mean=float(y.mean().item()), updates=agent.updates)


def save_agent(agent: TD3Agent, path: str | Path, config_hash: str, key: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"format_version": CHECKPOINT_VERSION, "config_hash": config_hash, "key": key,
                "agent": agent.state_dict()}, path)
    log.info("explorer_checkpoint_saved key=%s path=%s updates=%d", key, path, agent.updates)
    return path


def load_agent(path: str | Path, cfg: Optional[ExplorerSettings] = None,
               expected_hash: Optional[str] = None) -> Tuple[TD3Agent, Dict]:
    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise PreconditionError(f"unsupported explorer checkpoint version {payload.get('format_version')}")
    if expected_hash is not None and payload.get("config_hash") != expected_hash:
        raise PreconditionError(
            f"checkpoint config hash {payload.get('config_hash')} does not match {expected_hash}"
        )
    agent = TD3Agent(cfg)
    agent.load_state_dict(payload["agent"])
    return agent, {"config_hash": payload.get("config_hash"), "key": payload.get("key")}
