"""Twin-critic deterministic actor-critic learner (TD3 style).

The actor maps normalized observations to excitations ``u_max * sigmoid(.)``,
so its output is always inside the clip range. Rewards come from the replay
buffer, relabeled with the effort weight at sampling time.
"""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from natwalk.agent.noise import OUNoise
from natwalk.replay import ReplayBuffer


class TrainingError(RuntimeError):
    """A learner update produced non-finite numbers."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(f"{message}: {diagnostics}")
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class LearnerConfig:
    hidden_sizes: tuple[int, ...] = (256, 256)
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    batch_size: int = 256
    steps_before_batches: int = 200_000
    steps_between_batches: int = 1000
    n_batches: int = 30
    gamma: float = 0.99
    tau: float = 0.005
    policy_delay: int = 2
    target_noise: float = 0.05  # std of target-policy smoothing noise
    target_noise_clip: float = 0.1
    noise_sigma: float = 0.1  # exploration, stationary std
    noise_correlation_time: float = 0.1  # s
    replay_capacity: int = 1_000_000
    obs_clip: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        positive = ("actor_lr", "critic_lr", "batch_size", "steps_between_batches",
                    "n_batches", "tau", "policy_delay", "noise_correlation_time",
                    "replay_capacity", "obs_clip")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise ValueError("hidden_sizes must be a non-empty list of positive widths")
        if self.steps_before_batches < 0:
            raise ValueError("steps_before_batches must be non-negative")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if min(self.noise_sigma, self.target_noise, self.target_noise_clip) < 0:
            raise ValueError("noise scales must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d


def mlp(n_in: int, hidden: tuple[int, ...], n_out: int) -> nn.Sequential:
    layers: list[nn.Module] = []
    for h in hidden:
        layers += [nn.Linear(n_in, h), nn.ReLU()]
        n_in = h
    layers.append(nn.Linear(n_in, n_out))
    return nn.Sequential(*layers)


class Actor(nn.Module):
    def __init__(self, obs_dim, act_dim, hidden, u_max):
        super().__init__()
        self.net = mlp(obs_dim, hidden, act_dim)
        self.u_max = u_max

    def forward(self, obs):
        return self.u_max * torch.sigmoid(self.net(obs))


class Critic(nn.Module):
    def __init__(self, obs_dim, act_dim, hidden):
        super().__init__()
        self.net = mlp(obs_dim + act_dim, hidden, 1)

    def forward(self, obs, act):
        return self.net(torch.cat([obs, act], dim=-1)).squeeze(-1)


@dataclass
class RunningNorm:
    """Welford mean/variance of observations seen so far."""

    dim: int
    count: float = 0.0
    mean: np.ndarray = field(default=None)
    m2: np.ndarray = field(default=None)

    def __post_init__(self):
        self.mean = np.zeros(self.dim) if self.mean is None else np.asarray(self.mean, float)
        self.m2 = np.zeros(self.dim) if self.m2 is None else np.asarray(self.m2, float)

    def update(self, x) -> None:
        self.count += 1.0
        d = x - self.mean
        self.mean = self.mean + d / self.count
        self.m2 = self.m2 + d * (x - self.mean)

    @property
    def std(self) -> np.ndarray:
        if self.count < 2:
            return np.ones(self.dim)
        return np.sqrt(np.maximum(self.m2 / (self.count - 1.0), 1e-8))

    def normalize(self, x, clip: float) -> np.ndarray:
        return np.clip((x - self.mean) / self.std, -clip, clip)

    def state_dict(self) -> dict:
        return {"count": self.count, "mean": self.mean.tolist(), "m2": self.m2.tolist()}


class TD3Learner:
    def __init__(self, obs_dim: int, act_dim: int, u_max: float,
                 config: LearnerConfig | None = None, seed: int = 0, control_dt: float = 0.01):
        self.config = cfg = config or LearnerConfig()
        self.obs_dim, self.act_dim, self.u_max = obs_dim, act_dim, float(u_max)
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.actor = Actor(obs_dim, act_dim, cfg.hidden_sizes, self.u_max)
            self.critic1 = Critic(obs_dim, act_dim, cfg.hidden_sizes)
            self.critic2 = Critic(obs_dim, act_dim, cfg.hidden_sizes)
        self.actor_target = _frozen_copy(self.actor)
        self.critic1_target = _frozen_copy(self.critic1)
        self.critic2_target = _frozen_copy(self.critic2)
        self.actor_opt = torch.optim.Adam(self.actor.parameters(), lr=cfg.actor_lr)
        self.critic_opt = torch.optim.Adam(
            list(self.critic1.parameters()) + list(self.critic2.parameters()), lr=cfg.critic_lr)
        ss = np.random.SeedSequence(seed)
        sample_seed, noise_seed, torch_seed = ss.spawn(3)
        self.sample_rng = np.random.default_rng(sample_seed)
        self.noise = OUNoise(act_dim, cfg.noise_sigma, cfg.noise_correlation_time, control_dt,
                             np.random.default_rng(noise_seed))
        self.torch_gen = torch.Generator().manual_seed(int(torch_seed.generate_state(1)[0]))
        self.obs_norm = RunningNorm(obs_dim)
        self.n_updates = 0
        self.last_train_step = 0

    # --- acting -------------------------------------------------------------

    def _norm(self, obs) -> np.ndarray:
        return self.obs_norm.normalize(obs, self.config.obs_clip)

    def act(self, observation, explore: bool = False, noise: OUNoise | None = None) -> np.ndarray:
        """Policy excitation, plus correlated noise when exploring, clipped to [0, u_max].

        ``noise`` selects the exploration process (one per environment); the
        learner's own process is used by default.
        """
        obs = np.asarray(observation, dtype=np.float64)
        if obs.shape != (self.obs_dim,):
            raise ValueError(f"observation has shape {obs.shape}, expected ({self.obs_dim},)")
        with torch.no_grad():
            x = torch.as_tensor(self._norm(obs), dtype=torch.float32).unsqueeze(0)
            u = self.actor(x).squeeze(0).double().numpy()
        if explore:
            u = u + (noise or self.noise).sample()
        return np.clip(u, 0.0, self.u_max)

    # --- learning -----------------------------------------------------------

    def updates_due(self, global_step: int) -> int:
        cfg = self.config
        if global_step < cfg.steps_before_batches:
            return 0
        if global_step - self.last_train_step < cfg.steps_between_batches:
            return 0
        return cfg.n_batches

    def maybe_train(self, buffer: ReplayBuffer, alpha: float, global_step: int) -> list[dict]:
        """Run the scheduled number of updates for ``global_step`` (often zero)."""
        n = self.updates_due(global_step)
        if n == 0 or len(buffer) < self.config.batch_size:
            return []
        self.last_train_step = global_step
        return [self.train_step(buffer, alpha) for _ in range(n)]

    def train_step(self, buffer: ReplayBuffer, alpha: float) -> dict:
        """One critic update (and a delayed actor update) on a relabeled batch."""
        cfg = self.config
        if len(buffer) < cfg.batch_size:
            raise ValueError(f"buffer holds {len(buffer)} transitions, need {cfg.batch_size}")
        batch = buffer.sample(cfg.batch_size, alpha, self.sample_rng)
        f32 = torch.float32
        obs = torch.as_tensor(self._norm(batch.observations), dtype=f32)
        nxt = torch.as_tensor(self._norm(batch.next_observations), dtype=f32)
        act = torch.as_tensor(batch.actions, dtype=f32)
        rew = torch.as_tensor(batch.rewards, dtype=f32)
        done = torch.as_tensor(batch.dones, dtype=f32)

        with torch.no_grad():
            eps = torch.randn(act.shape, generator=self.torch_gen) * cfg.target_noise
            eps = eps.clamp(-cfg.target_noise_clip, cfg.target_noise_clip)
            a_next = (self.actor_target(nxt) + eps).clamp(0.0, self.u_max)
            q_next = torch.min(self.critic1_target(nxt, a_next), self.critic2_target(nxt, a_next))
            target = rew + cfg.gamma * (1.0 - done) * q_next
        q1, q2 = self.critic1(obs, act), self.critic2(obs, act)
        critic_loss = ((q1 - target) ** 2).mean() + ((q2 - target) ** 2).mean()
        self.critic_opt.zero_grad()
        critic_loss.backward()
        self.critic_opt.step()
        self.n_updates += 1

        metrics = {"critic_loss": critic_loss.item(), "q_mean": q1.mean().item()}
        if self.n_updates % cfg.policy_delay == 0:
            actor_loss = -self.critic1(obs, self.actor(obs)).mean()
            self.actor_opt.zero_grad()
            actor_loss.backward()
            self.actor_opt.step()
            metrics["actor_loss"] = actor_loss.item()
            for net, tgt in ((self.actor, self.actor_target), (self.critic1, self.critic1_target),
                             (self.critic2, self.critic2_target)):
                _soft_update(net, tgt, cfg.tau)
        if not all(math.isfinite(v) for v in metrics.values()):
            raise TrainingError("non-finite learner update",
                                {**metrics, "n_updates": self.n_updates,
                                 "reward_range": [float(rew.min()), float(rew.max())]})
        return metrics

    # --- checkpointing ------------------------------------------------------

    def state_dict(self) -> dict:
        return {
            "dims": (self.obs_dim, self.act_dim, self.u_max),
            "config": self.config.to_dict(),
            "actor": self.actor.state_dict(),
            "critic1": self.critic1.state_dict(),
            "critic2": self.critic2.state_dict(),
            "actor_target": self.actor_target.state_dict(),
            "critic1_target": self.critic1_target.state_dict(),
            "critic2_target": self.critic2_target.state_dict(),
            "actor_opt": self.actor_opt.state_dict(),
            "critic_opt": self.critic_opt.state_dict(),
            "sample_rng": self.sample_rng.bit_generator.state,
            "noise": self.noise.state_dict(),
            "torch_gen": self.torch_gen.get_state(),
            "obs_norm": self.obs_norm.state_dict(),
            "n_updates": self.n_updates,
            "last_train_step": self.last_train_step,
        }

    def load_state_dict(self, state: dict) -> None:
        if tuple(state["dims"]) != (self.obs_dim, self.act_dim, self.u_max):
            raise ValueError(f"checkpoint dimensions {tuple(state['dims'])} do not match "
                             f"{(self.obs_dim, self.act_dim, self.u_max)}")
        for name in ("actor", "critic1", "critic2", "actor_target", "critic1_target",
                     "critic2_target", "actor_opt", "critic_opt"):
            getattr(self, name).load_state_dict(state[name])
        self.sample_rng.bit_generator.state = state["sample_rng"]
        self.noise.load_state_dict(state["noise"])
        self.torch_gen.set_state(state["torch_gen"])
        self.obs_norm = RunningNorm(self.obs_dim, **state["obs_norm"])
        self.n_updates = state["n_updates"]
        self.last_train_step = state["last_train_step"]

    def save(self, path) -> None:
        torch.save(self.state_dict(), path)

    @classmethod
    def load(cls, path, control_dt: float = 0.01) -> "TD3Learner":
        state = torch.load(path, weights_only=False)
        obs_dim, act_dim, u_max = state["dims"]
        learner = cls(obs_dim, act_dim, u_max, LearnerConfig(**state["config"]),
                      control_dt=control_dt)
        learner.load_state_dict(state)
        return learner


def _frozen_copy(net: nn.Module) -> nn.Module:
    tgt = copy.deepcopy(net)
    for p in tgt.parameters():
        p.requires_grad_(False)
    return tgt


@torch.no_grad()
def _soft_update(net: nn.Module, target: nn.Module, tau: float) -> None:
    for p, tp in zip(net.parameters(), target.parameters()):
        tp.mul_(1.0 - tau).add_(p, alpha=tau)
