"""Ring-buffer replay memory that relabels rewards with the current alpha.

Transitions carry a :class:`~natwalk.reward.RewardBreakdown` instead of a
scalar reward; :meth:`ReplayBuffer.sample` recomposes every reward at
sampling time, so stored experience always reflects the current effort
weight.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from natwalk.reward import BREAKDOWN_FIELDS, RewardBreakdown

DEFAULT_CAPACITY = 1_000_000
CHECKPOINT_VERSION = 1

_F = {name: i for i, name in enumerate(BREAKDOWN_FIELDS)}


@dataclass(frozen=True)
class Transition:
    observation: np.ndarray
    action: np.ndarray
    next_observation: np.ndarray
    breakdown: RewardBreakdown
    done: bool
    episode: int = 0


@dataclass(frozen=True)
class Batch:
    observations: np.ndarray
    actions: np.ndarray
    next_observations: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    indices: np.ndarray


def relabel(breakdowns: np.ndarray, alpha: float) -> np.ndarray:
    """Vectorized ``total_reward`` over rows of stored breakdown arrays."""
    effort = alpha * breakdowns[:, _F["effort_activity"]] + breakdowns[:, _F["effort_fixed"]]
    effort = np.where(breakdowns[:, _F["effort_enabled"]] != 0.0, effort, 0.0)
    return breakdowns[:, _F["r_vel"]] - effort - breakdowns[:, _F["pain"]]


class ReplayBuffer:
    def __init__(self, obs_dim: int, act_dim: int, capacity: int = DEFAULT_CAPACITY,
                 action_bounds: tuple[float, float] = (0.0, 1.0)):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.action_bounds = action_bounds
        self._obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self._next = np.zeros((capacity, obs_dim), dtype=np.float32)
        self._act = np.zeros((capacity, act_dim), dtype=np.float32)
        self._brk = np.zeros((capacity, len(BREAKDOWN_FIELDS)), dtype=np.float64)
        self._done = np.zeros(capacity, dtype=np.float32)
        self._episode = np.zeros(capacity, dtype=np.int64)
        self._head = 0
        self._size = 0
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return self._size

    def push(self, t: Transition) -> None:
        brk = t.breakdown.as_array()
        if not np.all(np.isfinite(brk)):
            raise ValueError("reward breakdown must be finite")
        act = np.asarray(t.action, dtype=np.float32)
        lo, hi = self.action_bounds
        if act.shape != (self.act_dim,) or act.min() < lo or act.max() > hi:
            raise ValueError("action outside the configured clip range")
        with self._lock:
            i = self._head
            self._obs[i] = t.observation
            self._next[i] = t.next_observation
            self._act[i] = act
            self._brk[i] = brk
            self._done[i] = float(t.done)
            self._episode[i] = t.episode
            self._head = (i + 1) % self.capacity
            self._size = min(self._size + 1, self.capacity)

    def _slot(self, k: int) -> int:
        """Physical index of the k-th oldest stored transition."""
        start = self._head - self._size
        return (start + k) % self.capacity

    def get(self, k: int) -> Transition:
        if not 0 <= k < self._size:
            raise IndexError(k)
        with self._lock:
            i = self._slot(k)
            return Transition(
                observation=self._obs[i].copy(),
                action=self._act[i].copy(),
                next_observation=self._next[i].copy(),
                breakdown=RewardBreakdown.from_array(self._brk[i]),
                done=bool(self._done[i]),
                episode=int(self._episode[i]),
            )

    def sample(self, batch_size: int, alpha: float, rng: np.random.Generator) -> Batch:
        """Uniform sample with replacement; rewards relabeled with ``alpha``."""
        with self._lock:
            if self._size == 0:
                raise ValueError("cannot sample from an empty replay buffer")
            idx = rng.integers(0, self._size, size=batch_size)
            if self._size < self.capacity:
                slots = idx
            else:
                slots = (self._head + idx) % self.capacity
            return Batch(
                observations=self._obs[slots].copy(),
                actions=self._act[slots].copy(),
                next_observations=self._next[slots].copy(),
                rewards=relabel(self._brk[slots], alpha),
                dones=self._done[slots].copy(),
                indices=idx,
            )

    # --- checkpointing ------------------------------------------------------

    def state_dict(self) -> dict:
        with self._lock:
            n = self._size
            order = np.array([self._slot(k) for k in range(n)], dtype=np.int64)
            return {
                "version": CHECKPOINT_VERSION,
                "capacity": self.capacity,
                "action_bounds": tuple(self.action_bounds),
                "obs": self._obs[order].copy(),
                "next": self._next[order].copy(),
                "act": self._act[order].copy(),
                "brk": self._brk[order].copy(),
                "done": self._done[order].copy(),
                "episode": self._episode[order].copy(),
            }

    def load_state_dict(self, state: dict) -> None:
        if state.get("version") != CHECKPOINT_VERSION:
            raise ValueError("unsupported replay checkpoint version")
        n = len(state["obs"])
        if n > self.capacity:
            raise ValueError("checkpoint holds more transitions than the buffer capacity")
        with self._lock:
            self._obs[:n] = state["obs"]
            self._next[:n] = state["next"]
            self._act[:n] = state["act"]
            self._brk[:n] = state["brk"]
            self._done[:n] = state["done"]
            self._episode[:n] = state["episode"]
            self._size = n
            self._head = n % self.capacity

    def save(self, path) -> None:
        np.savez_compressed(path, **{k: np.asarray(v) for k, v in self.state_dict().items()})

    @classmethod
    def load(cls, path, obs_dim: int | None = None, act_dim: int | None = None) -> "ReplayBuffer":
        with np.load(path) as data:
            state = {k: data[k] for k in data.files}
        state["version"] = int(state["version"])
        buf = cls(obs_dim or state["obs"].shape[1], act_dim or state["act"].shape[1],
                  capacity=int(state["capacity"]),
                  action_bounds=tuple(float(v) for v in state["action_bounds"]))
        buf.load_state_dict(state)
        return buf
