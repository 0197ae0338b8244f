"""Training loop, evaluation rollouts and checkpointing.

Output directory layout::

    metrics.csv              one row per finished episode
    rewards.csv              per-step reward terms (only with log_rewards)
    run.json                 provenance header (config hash, seed)
    checkpoints/
        LATEST               name of the newest checkpoint directory
        step_000100000/
            learner.pt       networks, optimizers, normalizer and RNG states
            replay.npz       replay buffer contents
            trainer.pt       environments, adaptation state, counters, log offsets

Checkpoints hold the full trainer state, so resuming from one reproduces
the uninterrupted run exactly.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from natwalk import adapt, gaitlab
from natwalk.agent.env import EnvConfig, WalkEnv
from natwalk.agent.noise import OUNoise
from natwalk.agent.td3 import LearnerConfig, TD3Learner
from natwalk.replay import ReplayBuffer, Transition
from natwalk.reward import effort_from_breakdown, total_reward

log = logging.getLogger(__name__)

VARIANTS = ("ours", "no-adapt", "no-effort", "only-vel")

METRIC_COLUMNS = ("episode", "steps", "length", "task_return", "total_return", "mean_effort",
                  "alpha", "r_mean", "c_mean", "delta_alpha", "branch", "fell", "u_max",
                  "exp_match", "reset_seed")
REWARD_COLUMNS = ("episode", "step", "r_vel", "c_effort", "c_pain", "alpha", "u_max", "reward")


@dataclass
class TrainConfig:
    total_steps: int = 2_000_000
    n_envs: int = 1
    checkpoint_every: int = 100_000
    log_rewards: bool = False
    variant: str = "ours"
    env: EnvConfig = field(default_factory=EnvConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    adapt: adapt.AdaptConfig = field(default_factory=adapt.AdaptConfig)
    reference_band: str | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.total_steps < 1 or self.n_envs < 1 or self.checkpoint_every < 1:
            raise ValueError("total_steps, n_envs and checkpoint_every must be positive")


def apply_variant(env_cfg: EnvConfig, variant: str) -> tuple[EnvConfig, bool]:
    """Environment config for a reward ablation and whether alpha adapts."""
    w = env_cfg.weights
    if variant == "ours":
        return env_cfg, True
    if variant == "no-adapt":
        return env_cfg, False
    if variant == "no-effort":
        # dropping the effort cost also lifts the excitation clip
        w = dataclasses.replace(w, effort_enabled=False)
        return dataclasses.replace(env_cfg, weights=w, u_max=1.0), False
    if variant == "only-vel":
        w = dataclasses.replace(w, effort_enabled=False, pain_enabled=False)
        return dataclasses.replace(env_cfg, weights=w), False
    raise ValueError(f"unknown variant {variant!r}")


@dataclass
class _Episode:
    """Accumulators for the episode running in one environment."""

    index: int
    seed: int
    task_return: float = 0.0
    total_return: float = 0.0
    effort_sum: float = 0.0
    length: int = 0
    angles: list = field(default_factory=list)
    grf: list = field(default_factory=list)


@dataclass
class TrainResult:
    out_dir: Path
    steps: int
    episodes: int
    adapt_state: adapt.AdaptState
    learner: TD3Learner


class Trainer:
    def __init__(self, cfg: TrainConfig, seed: int, out_dir, env_factory: Callable | None = None,
                 meta: dict | None = None):
        self.cfg = cfg
        self.seed = int(seed)
        self.out = Path(out_dir)
        self.meta = dict(meta or {})
        self.meta.setdefault("seed", self.seed)
        env_cfg, self.adapt_enabled = apply_variant(cfg.env, cfg.variant)
        factory = env_factory or (lambda i, c: WalkEnv(config=c))
        self.envs = [factory(i, env_cfg) for i in range(cfg.n_envs)]
        env0 = self.envs[0]
        self.u_max = env0.clip
        self.learner = TD3Learner(env0.observation_dim, env0.action_dim, self.u_max,
                                  cfg.learner, seed=self.seed, control_dt=env_cfg.control_dt)
        self.buffer = ReplayBuffer(env0.observation_dim, env0.action_dim,
                                   cfg.learner.replay_capacity, (0.0, self.u_max))
        ss = np.random.SeedSequence([self.seed, 1])
        reset_seed, *noise_seeds = ss.spawn(1 + cfg.n_envs)
        self.reset_rng = np.random.default_rng(reset_seed)
        self.noises = [self.learner.noise] + [
            OUNoise(env0.action_dim, cfg.learner.noise_sigma, cfg.learner.noise_correlation_time,
                    env_cfg.control_dt, np.random.default_rng(s)) for s in noise_seeds[1:]]
        self.band = gaitlab.read_reference_band(cfg.reference_band) if cfg.reference_band else None
        self.adapt_state = adapt.AdaptState.initial(cfg.adapt)
        self.global_step = 0
        self.n_episodes = 0
        self.next_episode = 0
        self.metric_rows = 0
        self.reward_rows = 0
        self.obs: list[np.ndarray] = []
        self.episodes: list[_Episode] = []
        self.updates: list[dict] = []

    # --- episode bookkeeping -------------------------------------------------

    @property
    def alpha(self) -> float:
        return self.adapt_state.alpha

    def _start_episode(self, i: int) -> None:
        seed = int(self.reset_rng.integers(2**31))
        ep = _Episode(self.next_episode, seed)
        self.next_episode += 1
        obs = self.envs[i].reset(seed)
        self.learner.obs_norm.update(obs)
        self.noises[i].reset()
        if i < len(self.obs):
            self.obs[i], self.episodes[i] = obs, ep
        else:
            self.obs.append(obs)
            self.episodes.append(ep)

    def _exp_match(self, env: WalkEnv, ep: _Episode) -> float:
        if self.band is None or ep.length < 2:
            return float("nan")
        n = ep.length
        rollout = gaitlab.Rollout(
            dt=env.config.control_dt,
            joint_angles={d: np.array([a[k] for a in ep.angles])
                          for k, d in enumerate(env.model.dof_names)},
            grf={f: np.array([g[k] for g in ep.grf]) for k, f in enumerate(env.model.feet)},
            activations=np.zeros((n, 0)), com_x=np.zeros(n), com_vx=np.zeros(n),
            body_weight=env.model.body_weight, legs=leg_map(env.model))
        report, _ = gaitlab.analyze([rollout], self.band)
        return report.aggregate

    def _finish_episode(self, i: int, fell: bool) -> None:
        ep = self.episodes[i]
        env = self.envs[i]
        new_state = adapt.update(self.adapt_state, ep.task_return, self.cfg.adapt)
        if not self.adapt_enabled:
            new_state = adapt.disabled(new_state)
        self.adapt_state = new_state
        s = self.adapt_state
        row = {
            "episode": ep.index, "steps": self.global_step, "length": ep.length,
            "task_return": ep.task_return, "total_return": ep.total_return,
            "mean_effort": ep.effort_sum / max(ep.length, 1),
            "alpha": s.alpha, "r_mean": s.r_mean, "c_mean": s.c_mean, "delta_alpha": s.delta,
            "branch": s.last_branch, "fell": int(fell), "u_max": self.u_max,
            "exp_match": self._exp_match(env, ep), "reset_seed": ep.seed,
        }
        self._metrics.writerow([_fmt(row[c]) for c in METRIC_COLUMNS])
        self._metrics_fh.flush()
        self.metric_rows += 1
        self.n_episodes += 1
        self._start_episode(i)

    # --- main loop -----------------------------------------------------------

    def _env_step(self, i: int) -> None:
        env, ep, obs = self.envs[i], self.episodes[i], self.obs[i]
        u = self.learner.act(obs, explore=True, noise=self.noises[i])
        nxt, info, terminal = env.step(u)
        self.learner.obs_norm.update(nxt)
        b = info.breakdown
        self.buffer.push(Transition(obs, u, nxt, b, terminal, ep.index))
        self.global_step += 1
        alpha = self.alpha
        reward = total_reward(b, alpha)
        ep.task_return += b.r_vel
        ep.total_return += reward
        ep.effort_sum += b.effort_activity
        ep.length += 1
        if self.band is not None:
            ep.angles.append(env.state.q.copy())
            ep.grf.append(info.report.grf_per_foot.copy() if info.report else
                          np.zeros(len(env.model.feet)))
        if self._rewards is not None:
            self._rewards.writerow([_fmt(v) for v in (
                ep.index, ep.length - 1, b.r_vel, effort_from_breakdown(b, alpha), b.pain,
                alpha, self.u_max, reward)])
            self.reward_rows += 1
        self.obs[i] = nxt
        if terminal or info.truncated:
            self._finish_episode(i, fell=terminal)
        self.updates += self.learner.maybe_train(self.buffer, self.alpha, self.global_step)

    def _open_logs(self, resume: bool) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        header = f"# {json.dumps(self.meta, sort_keys=True)}\n"
        self._metrics_fh = _open_log(self.out / "metrics.csv", METRIC_COLUMNS, header,
                                     self.metric_rows if resume else None)
        self._metrics = csv.writer(self._metrics_fh, lineterminator="\n")
        self._rewards_fh = None
        self._rewards = None
        if self.cfg.log_rewards:
            self._rewards_fh = _open_log(self.out / "rewards.csv", REWARD_COLUMNS, header,
                                         self.reward_rows if resume else None)
            self._rewards = csv.writer(self._rewards_fh, lineterminator="\n")

    def _close_logs(self) -> None:
        self._metrics_fh.close()
        if self._rewards_fh:
            self._rewards_fh.close()

    def run(self, resume_from=None) -> TrainResult:
        torch.set_num_threads(1)
        if resume_from is not None:
            self.load_checkpoint(resume_from)
        else:
            for i in range(len(self.envs)):
                self._start_episode(i)
        self._open_logs(resume=resume_from is not None)
        (self.out / "run.json").write_text(json.dumps(self.meta, indent=2, sort_keys=True))
        try:
            while self.global_step < self.cfg.total_steps:
                for i in range(len(self.envs)):
                    self._env_step(i)
                    if self.global_step % self.cfg.checkpoint_every == 0:
                        self._flush()
                        self.save_checkpoint()
                    if self.global_step >= self.cfg.total_steps:
                        break
        finally:
            self._close_logs()
        return TrainResult(self.out, self.global_step, self.n_episodes, self.adapt_state,
                           self.learner)

    def _flush(self) -> None:
        self._metrics_fh.flush()
        if self._rewards_fh:
            self._rewards_fh.flush()

    # --- checkpoints ---------------------------------------------------------

    def save_checkpoint(self) -> Path:
        root = self.out / "checkpoints"
        name = f"step_{self.global_step:09d}"
        d = root / name
        d.mkdir(parents=True, exist_ok=True)
        self.learner.save(d / "learner.pt")
        self.buffer.save(d / "replay.npz")
        trainer = {
            "meta": self.meta,
            "global_step": self.global_step,
            "n_episodes": self.n_episodes,
            "next_episode": self.next_episode,
            "metric_rows": self.metric_rows,
            "reward_rows": self.reward_rows,
            "adapt": adapt.snapshot(self.adapt_state),
            "adapt_branch": self.adapt_state.last_branch,
            "reset_rng": self.reset_rng.bit_generator.state,
            "noises": [n.state_dict() for n in self.noises[1:]],
            "obs": self.obs,
            "episodes": [dataclasses.asdict(e) for e in self.episodes],
            "envs": [e.get_state() for e in self.envs],
        }
        torch.save(trainer, d / "trainer.pt")
        (root / "LATEST").write_text(name)
        return d

    def load_checkpoint(self, path) -> None:
        d = resolve_checkpoint(path)
        self.learner.load_state_dict(torch.load(d / "learner.pt", weights_only=False))
        self.noises[0] = self.learner.noise
        self.buffer = ReplayBuffer.load(d / "replay.npz")
        t = torch.load(d / "trainer.pt", weights_only=False)
        if len(t["envs"]) != len(self.envs):
            raise ValueError("checkpoint was written with a different number of environments")
        self.global_step = t["global_step"]
        self.n_episodes = t["n_episodes"]
        self.next_episode = t["next_episode"]
        self.metric_rows = t["metric_rows"]
        self.reward_rows = t["reward_rows"]
        self.adapt_state = dataclasses.replace(adapt.restore(t["adapt"]),
                                               last_branch=t["adapt_branch"])
        self.reset_rng.bit_generator.state = t["reset_rng"]
        for n, s in zip(self.noises[1:], t["noises"]):
            n.load_state_dict(s)
        self.obs = list(t["obs"])
        self.episodes = [_Episode(**e) for e in t["episodes"]]
        for env, s in zip(self.envs, t["envs"]):
            env.set_state(s)


def run_training(cfg: TrainConfig, seed: int, out_dir, env_factory: Callable | None = None,
                 meta: dict | None = None, resume_from=None) -> TrainResult:
    """Collect experience, train the learner and adapt alpha after every episode.

    A simulation divergence ends the episode as a fall; it never stops the run.
    """
    return Trainer(cfg, seed, out_dir, env_factory, meta).run(resume_from)


def resolve_checkpoint(path) -> Path:
    """Accept a checkpoint directory, a run directory or a ``checkpoints`` directory."""
    p = Path(path)
    for cand in (p, p / "checkpoints"):
        latest = cand / "LATEST"
        if latest.exists():
            return cand / latest.read_text().strip()
    if (p / "learner.pt").exists():
        return p
    if p.suffix == ".pt" and p.exists():
        return p.parent
    raise FileNotFoundError(f"no checkpoint found at {p}")


def load_policy(path) -> TD3Learner:
    return TD3Learner.load(resolve_checkpoint(path) / "learner.pt")


# --------------------------------------------------------------------------
# evaluation


@dataclass
class EvalEpisode:
    seed: int
    columns: list[str]
    rows: np.ndarray
    rollout: gaitlab.Rollout
    distance: float
    effort: float
    mean_velocity: float
    fell: bool
    steps: int


def leg_map(model) -> dict[str, dict[str, str]]:
    return {leg.name: {"hip": leg.hip, "knee": leg.knee, "ankle": leg.ankle, "foot": leg.foot}
            for leg in model.legs}


def evaluate_episode(learner: TD3Learner, env: WalkEnv, seed: int) -> EvalEpisode:
    """Run the deterministic policy for one episode from ``reset(seed)``."""
    model = env.model
    cols = gaitlab.rollout_columns(model.dof_names, [m.name for m in model.muscles], model.feet)
    feet_order = [model.feet.index(f) for f in sorted(model.feet)]
    obs = env.reset(seed)
    rows = []
    fell = False
    x0 = None
    while True:
        u = learner.act(obs, explore=False)
        u = np.minimum(u, env.clip)
        obs, info, terminal = env.step(u)
        rep = info.report
        if rep is not None:
            grf = rep.grf_per_foot[feet_order]
            com_x, com_vx = rep.com_x, rep.com_velocity
        else:
            grf = np.zeros(len(model.feet))
            com_x, com_vx = (rows[-1][-2], 0.0) if rows else (0.0, 0.0)
        if x0 is None:
            x0 = com_x
        s = env.state
        rows.append(np.concatenate([[s.t], s.q, s.qd, s.a, u, grf, [com_x, com_vx]]))
        if terminal or info.truncated:
            fell = bool(terminal)
            break
    data = np.array(rows)
    col = {c: data[:, k] for k, c in enumerate(cols)}
    rollout = gaitlab.Rollout(
        dt=env.config.control_dt,
        joint_angles={d: col[f"q_{d}"] for d in model.dof_names},
        grf={f: col[f"grf_{f}"] for f in model.feet},
        activations=data[:, [cols.index(f"a_{m.name}") for m in model.muscles]],
        com_x=col["com_x"], com_vx=col["com_vx"],
        body_weight=model.body_weight, legs=leg_map(model))
    effort, distance = gaitlab.summary_metrics(rollout)
    duration = len(rows) * env.config.control_dt
    return EvalEpisode(seed, cols, data, rollout, distance, effort, distance / duration, fell,
                       len(rows))


def evaluate(learner: TD3Learner, env: WalkEnv, n_rollouts: int, seed: int) -> list[EvalEpisode]:
    """``n_rollouts`` episodes with reset seeds drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    seeds = [int(s) for s in rng.integers(2**31, size=n_rollouts)]
    return [evaluate_episode(learner, env, s) for s in seeds]


# --------------------------------------------------------------------------
# helpers


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def _open_log(path: Path, columns, header: str, keep_rows: int | None):
    """Open a CSV log for appending; on resume, drop rows past ``keep_rows``."""
    if keep_rows is None or not path.exists():
        fh = open(path, "w", newline="", encoding="utf-8")
        fh.write(header)
        csv.writer(fh, lineterminator="\n").writerow(columns)
        return fh
    with open(path, encoding="utf-8") as fh:
        lines = fh.readlines()
    n_head = sum(1 for line in lines[:2] if line.startswith("#")) + 1
    kept = lines[:n_head + keep_rows]
    fh = open(path, "w", newline="", encoding="utf-8")
    fh.writelines(kept)
    return fh
