from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class Transition:
    obs: np.ndarray
    state: np.ndarray
    key: bytes
    actions: np.ndarray
    reward: float
    next_obs: np.ndarray
    next_state: np.ndarray
    next_key: bytes
    terminal: bool


class ReplayBuffer:
    """Fixed-capacity ring buffer with uniform sampling over the filled region.

    Observations are kept in float32 to bound memory on grid tasks.
    """

    def __init__(self, capacity, n_agents, obs_dim, state_dim):
        self.capacity = capacity
        self.obs = np.zeros((capacity, n_agents, obs_dim), dtype=np.float32)
        self.next_obs = np.zeros_like(self.obs)
        self.state = np.zeros((capacity, state_dim), dtype=np.float32)
        self.next_state = np.zeros_like(self.state)
        self.actions = np.zeros((capacity, n_agents), dtype=np.int64)
        self.reward = np.zeros(capacity)
        self.terminal = np.zeros(capacity)
        self.keys = [b""] * capacity
        self.next_keys = [b""] * capacity
        self.pos = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, tr):
        i = self.pos
        self.obs[i] = tr.obs
        self.next_obs[i] = tr.next_obs
        self.state[i] = tr.state
        self.next_state[i] = tr.next_state
        self.actions[i] = tr.actions
        self.reward[i] = tr.reward
        self.terminal[i] = float(tr.terminal)
        self.keys[i] = tr.key
        self.next_keys[i] = tr.next_key
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, rng, batch):
        return rng.integers(0, self.size, size=batch)

    def batch(self, idx):
        return {
            "obs": self.obs[idx].astype(np.float64),
            "next_obs": self.next_obs[idx].astype(np.float64),
            "state": self.state[idx].astype(np.float64),
            "next_state": self.next_state[idx].astype(np.float64),
            "actions": self.actions[idx],
            "reward": self.reward[idx],
            "terminal": self.terminal[idx],
            "keys": [self.keys[i] for i in idx],
            "next_keys": [self.next_keys[i] for i in idx],
        }


class RewardScaler:
    """Divide rewards by a running standard deviation (no mean shift).

    Keeping the mean preserves the sign of sparse rewards. The deviation is
    clamped below at ``min_std``.
    """

    def __init__(self, enabled=True, min_std=1e-6):
        self.enabled = enabled
        self.min_std = min_std
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def observe(self, r):
        self.count += 1
        delta = r - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (r - self.mean)

    @property
    def std(self):
        if self.count < 2:
            return 0.0
        return math.sqrt(self.m2 / self.count)

    def scale(self, r):
        if not self.enabled:
            return r
        return r / max(self.std, self.min_std)

    def __call__(self, r):
        """Update the running statistics with ``r`` and return it standardized."""
        self.observe(r)
        return self.scale(r)
