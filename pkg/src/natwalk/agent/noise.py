"""Temporally correlated exploration noise, one channel per muscle."""

from __future__ import annotations

import math

import numpy as np


class OUNoise:
    """Ornstein-Uhlenbeck process with stationary std ``sigma``.

    Discretized exactly: ``x <- x * exp(-dt/tau) + sigma * sqrt(1 - exp(-2 dt/tau)) * n``,
    so the stationary distribution is N(0, sigma^2) for any step size.
    """

    def __init__(self, dim: int, sigma: float = 0.1, correlation_time: float = 0.1,
                 dt: float = 0.01, rng: np.random.Generator | None = None):
        if sigma < 0 or correlation_time <= 0 or dt <= 0:
            raise ValueError("sigma must be >= 0; correlation_time and dt must be > 0")
        self.dim = dim
        self.sigma = sigma
        self.decay = math.exp(-dt / correlation_time)
        self.scale = sigma * math.sqrt(1.0 - self.decay**2)
        self.rng = rng if rng is not None else np.random.default_rng()
        self.x = np.zeros(dim)

    def reset(self) -> None:
        """Restart from a stationary draw."""
        self.x = self.sigma * self.rng.standard_normal(self.dim)

    def sample(self) -> np.ndarray:
        self.x = self.decay * self.x + self.scale * self.rng.standard_normal(self.dim)
        return self.x.copy()

    def state_dict(self) -> dict:
        return {"x": self.x.tolist(), "rng": self.rng.bit_generator.state}

    def load_state_dict(self, state: dict) -> None:
        self.x = np.array(state["x"], dtype=float)
        self.rng.bit_generator.state = state["rng"]
