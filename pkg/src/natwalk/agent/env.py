"""Episodic walking task around the planar simulator."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from natwalk import biomech
from natwalk.biomech import ModelSpec, SimState, SimulationDiverged
from natwalk.reward import RewardBreakdown, RewardWeights, decompose, running_reward
from natwalk.terrain import Terrain, flat, height_and_normal

CONTROL_DT = 0.01
N_SUBSTEPS = 100
HORIZON = 1000
FALL_FRACTION = 0.7
WALK_CLIP = 0.5
RUN_CLIP = 1.0
MODES = ("walk", "run")


@dataclass
class EnvConfig:
    mode: str = "walk"
    horizon: int = HORIZON
    control_dt: float = CONTROL_DT
    n_substeps: int = N_SUBSTEPS
    fall_fraction: float = FALL_FRACTION
    u_max: float | None = None  # None picks the mode default
    collision_weight: float = 0.1  # running task only
    weights: RewardWeights = field(default_factory=RewardWeights)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.horizon < 1 or self.n_substeps < 1 or self.control_dt <= 0:
            raise ValueError("horizon, n_substeps and control_dt must be positive")
        if self.u_max is not None and not 0.0 < self.u_max <= 1.0:
            raise ValueError("u_max must lie in (0, 1]")
        if self.mode == "run" and self.weights.effort_enabled:
            # running keeps the pain terms but drops the effort cost
            self.weights = dataclasses.replace(self.weights, effort_enabled=False)

    @property
    def clip(self) -> float:
        if self.u_max is not None:
            return self.u_max
        return WALK_CLIP if self.mode == "walk" else RUN_CLIP


@dataclass
class StepInfo:
    breakdown: RewardBreakdown
    report: biomech.StepReport | None
    fell: bool
    diverged: bool
    truncated: bool


class WalkEnv:
    """Reset/step wrapper producing proprioceptive observations.

    The observation holds joint angles and velocities, pelvis height above the
    lower foot, pelvis pitch, pelvis planar and angular velocity, muscle
    activations, per-foot contact flags and the previous excitation. Nothing
    about the terrain ahead is included.
    """

    def __init__(self, model: ModelSpec | None = None, terrain: Terrain | None = None,
                 config: EnvConfig | None = None):
        self.model = model or biomech.load_model()
        self.terrain = terrain or flat()
        self.config = config or EnvConfig()
        idx = self.model.dof_index
        root = self.model.root_joint
        self._tx, self._ty, self._tilt = (idx[d] for d in root.dofs)
        self._joint_dofs = np.array([i for i, d in enumerate(self.model.dof_names)
                                     if d not in root.dofs], dtype=np.int64)
        self._root_y = root.origin[1]
        self.standing_height = -min(biomech.foot_clearance(
            self.model, np.zeros(self.model.n_dof)).values())
        self.state: SimState | None = None
        self.t_step = 0
        self._u_prev = np.zeros(self.model.n_muscles)
        self._grf = np.zeros(len(self.model.feet))

    @property
    def action_dim(self) -> int:
        return self.model.n_muscles

    @property
    def observation_dim(self) -> int:
        nj = len(self._joint_dofs)
        return 2 * nj + 5 + 2 * self.model.n_muscles + len(self.model.feet)

    @property
    def clip(self) -> float:
        return self.config.clip

    def pelvis_height(self, state: SimState | None = None) -> float:
        """Pelvis height above the terrain directly below it."""
        q = (state or self.state).q
        x = q[self._tx]
        ground, _ = height_and_normal(self.terrain, x)
        return float(self._root_y + q[self._ty] - ground)

    def reset(self, seed) -> np.ndarray:
        self.state = biomech.reset(self.model, seed, self.terrain)
        self.t_step = 0
        self._u_prev = np.zeros(self.model.n_muscles)
        self._grf = np.zeros(len(self.model.feet))
        return self.observation()

    def get_state(self) -> dict:
        """Everything needed to continue the current episode exactly."""
        s = self.state
        return {"q": np.array(s.q), "qd": np.array(s.qd), "a": np.array(s.a), "t": s.t,
                "t_step": self.t_step, "u_prev": self._u_prev.copy(), "grf": self._grf.copy()}

    def set_state(self, d: dict) -> None:
        self.state = SimState(d["q"], d["qd"], d["a"], d["t"])
        self.t_step = int(d["t_step"])
        self._u_prev = np.array(d["u_prev"], dtype=float)
        self._grf = np.array(d["grf"], dtype=float)

    def observation(self) -> np.ndarray:
        s = self.state
        q, qd = s.q, s.qd
        feet_y = biomech.sphere_positions(self.model, q)[:, 1]
        lowest = float(np.min(feet_y)) - self.model.contact_spheres[0].radius
        obs = np.concatenate([
            q[self._joint_dofs], qd[self._joint_dofs],
            [self._root_y + q[self._ty] - lowest, q[self._tilt],
             qd[self._tx], qd[self._ty], qd[self._tilt]],
            s.a, (self._grf > 0.0).astype(np.float64), self._u_prev,
        ])
        return obs

    def step(self, u) -> tuple[np.ndarray, StepInfo, bool]:
        """Advance one control step. Returns (observation, info, terminal).

        ``terminal`` marks a fall (or divergence, treated as a fall);
        reaching the horizon sets ``info.truncated`` instead.
        """
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        cfg = self.config
        u = np.asarray(u, dtype=np.float64)
        if u.shape != (self.action_dim,):
            raise ValueError(f"expected {self.action_dim} excitations, got shape {u.shape}")
        if u.min() < 0.0 or u.max() > cfg.clip:
            raise ValueError(f"excitations must lie in [0, {cfg.clip}]")
        dt = cfg.control_dt / cfg.n_substeps
        w = cfg.weights
        try:
            self.state, rep = biomech.step(self.model, self.state, u, dt, self.terrain,
                                           cfg.n_substeps)
        except SimulationDiverged:
            self.t_step += 1
            brk = decompose(0.0, np.zeros(self.action_dim), u, self._u_prev, [], [],
                            self.model.body_weight, w, r_task=0.0)
            self._u_prev = u.copy()
            return self.observation(), StepInfo(brk, None, True, True, False), True
        self.t_step += 1
        self._grf = rep.grf_per_foot
        r_task = None
        if cfg.mode == "run":
            r_task = running_reward(rep.com_velocity, rep.self_collision_force,
                                    cfg.collision_weight, self.model.body_weight)
        brk = decompose(rep.com_velocity, self.state.a, u, self._u_prev,
                        rep.joint_limit_torques, rep.grf_per_foot, self.model.body_weight, w,
                        r_task=r_task)
        self._u_prev = u.copy()
        fell = self.pelvis_height() < cfg.fall_fraction * self.standing_height
        truncated = not fell and self.t_step >= cfg.horizon
        return self.observation(), StepInfo(brk, rep, fell, False, truncated), fell
