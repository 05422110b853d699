from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Dict, Iterable

import numpy as np
import torch

from prior_engine.errors import PreconditionError


@dataclass(frozen=True, eq=False)
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: float


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions; writes and reads hold `lock`."""

    def __init__(self, capacity: int = 2048, state_dim: int = 33, action_dim: int = 6):
        if capacity <= 0:
            raise ValueError("buffer capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim), dtype=np.float32)
        self.actions = np.zeros((capacity, action_dim), dtype=np.float32)
        self.rewards = np.zeros(capacity, dtype=np.float32)
        self.next_states = np.zeros((capacity, state_dim), dtype=np.float32)
        self.dones = np.zeros(capacity, dtype=np.float32)
        self._next = 0
        self._size = 0
        self.lock = threading.RLock()

    def __len__(self) -> int:
        return self._size

    def add(self, t: Transition) -> None:
        with self.lock:
            i = self._next
            self.states[i] = t.state
            self.actions[i] = t.action
            self.rewards[i] = t.reward
            self.next_states[i] = t.next_state
            self.dones[i] = t.done
            self._next = (i + 1) % self.capacity
            self._size = min(self._size + 1, self.capacity)

    def extend(self, transitions: Iterable[Transition]) -> None:
        with self.lock:
            for t in transitions:
                self.add(t)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Dict[str, torch.Tensor]:
        with self.lock:
            if self._size == 0:
                raise PreconditionError("cannot sample from an empty replay buffer")
            idx = rng.integers(0, self._size, size=batch_size)
            return {
                "state": torch.from_numpy(self.states[idx]),
                "action": torch.from_numpy(self.actions[idx]),
                "reward": torch.from_numpy(self.rewards[idx]).unsqueeze(-1),
                "next_state": torch.from_numpy(self.next_states[idx]),
                "done": torch.from_numpy(self.dones[idx]).unsqueeze(-1),
            }

    def snapshot(self) -> Dict[str, np.ndarray]:
        """Contents in insertion order (oldest first)."""
        with self.lock:
            if self._size < self.capacity:
                order = np.arange(self._size)
            else:
                order = (np.arange(self.capacity) + self._next) % self.capacity
            return {
                "state": self.states[order].copy(),
                "action": self.actions[order].copy(),
                "reward": self.rewards[order].copy(),
                "next_state": self.next_states[order].copy(),
                "done": self.dones[order].copy(),
            }


class BufferWriter:
    """Single-writer facade: concurrent collectors submit whole episodes."""

    def __init__(self, buffer: ReplayBuffer):
        self.buffer = buffer
        self.episodes_written = 0

    def submit(self, transitions: Iterable[Transition]) -> None:
        batch = list(transitions)
        with self.buffer.lock:
            self.buffer.extend(batch)
            self.episodes_written += 1
