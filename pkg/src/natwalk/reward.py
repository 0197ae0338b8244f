"""Velocity reward minus effort and pain costs, kept in decomposed form.

A :class:`RewardBreakdown` stores the unweighted cubic activity separately
from every other (already weighted) cost so the reward can be recomposed
later with a different effort weight. :func:`total_reward` and the fresh
computation ``r_vel - effort_cost(...)[0] - pain_cost(...)[0]`` perform the
same floating-point operations in the same order, so recomposition is exact.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np


@dataclass(frozen=True)
class RewardWeights:
    w1: float = 0.097  # excitation smoothness
    w2: float = 1.579  # fraction of muscles above the activity threshold
    w3: float = 0.131  # joint-limit torque, per N*m
    w4: float = 0.073  # GRF above the threshold, per body weight
    v_target: float = 1.2
    grf_threshold: float = 1.2  # body weights
    activity_threshold: float = 0.15
    effort_enabled: bool = True
    pain_enabled: bool = True

    def __post_init__(self):
        for f in ("w1", "w2", "w3", "w4", "v_target", "grf_threshold", "activity_threshold"):
            if getattr(self, f) < 0:
                raise ValueError(f"reward weight {f} must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RewardBreakdown:
    r_vel: float
    effort_activity: float  # mean a^3, not yet multiplied by alpha
    effort_smooth: float  # sum (u - u_prev)^2
    effort_nactive: float  # fraction of muscles with a > threshold
    pain_limits: float  # sum |tau_lim|, N*m
    pain_grf: float  # sum of GRF excess, body weights
    effort_fixed: float  # weighted smoothness + active-count cost
    pain: float  # weighted pain cost
    effort_enabled: bool = True

    def total(self, alpha: float) -> float:
        return total_reward(self, alpha)

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=np.float64)

    @classmethod
    def from_array(cls, values) -> "RewardBreakdown":
        names = [f.name for f in fields(cls)]
        kwargs = {n: float(v) for n, v in zip(names, values)}
        kwargs["effort_enabled"] = bool(kwargs["effort_enabled"])
        return cls(**kwargs)


BREAKDOWN_FIELDS = tuple(f.name for f in fields(RewardBreakdown))


def velocity_reward(v: float, v_target: float = 1.2) -> float:
    """Gaussian penalty below the target speed, flat at 1 above it."""
    if v < v_target:
        return math.exp(-((v - v_target) ** 2))
    return 1.0


def effort_cost(a, u, u_prev, alpha: float, w: RewardWeights) -> tuple[float, dict]:
    """``alpha * mean(a^3) + w1 * sum((u - u_prev)^2) + w2 * N_active``.

    N_active is the fraction of muscles whose activation exceeds
    ``w.activity_threshold``. The returned components are unweighted.
    """
    a = np.asarray(a, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    u_prev = np.asarray(u_prev, dtype=np.float64)
    if not (a.shape == u.shape == u_prev.shape):
        raise ValueError("activation and excitation vectors must have equal length")
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    n = a.size
    activity = float(np.mean(a**3)) if n else 0.0
    smooth = float(np.sum((u - u_prev) ** 2))
    nactive = float(np.count_nonzero(a > w.activity_threshold)) / n if n else 0.0
    components = {"activity": activity, "smooth": smooth, "nactive": nactive}
    if not w.effort_enabled:
        return 0.0, components
    fixed = w.w1 * smooth + w.w2 * nactive
    return alpha * activity + fixed, components


def pain_cost(limit_torques, grfs, body_weight: float, w: RewardWeights) -> tuple[float, dict]:
    """``w3 * sum|tau_lim| + w4 * sum max(0, grf/BW - threshold)``."""
    if body_weight <= 0:
        raise ValueError("body_weight must be positive")
    limits = float(np.sum(np.abs(np.asarray(limit_torques, dtype=np.float64))))
    excess = np.asarray(grfs, dtype=np.float64) / body_weight - w.grf_threshold
    grf = float(np.sum(np.maximum(0.0, excess)))
    components = {"limits": limits, "grf": grf}
    if not w.pain_enabled:
        return 0.0, components
    return w.w3 * limits + w.w4 * grf, components


def decompose(v, a, u, u_prev, limit_torques, grfs, body_weight, w: RewardWeights,
              r_task: float | None = None) -> RewardBreakdown:
    """Evaluate every term once and keep them apart for later relabeling.

    ``r_task`` overrides the walking velocity reward (used by the running
    variant).
    """
    _, eff = effort_cost(a, u, u_prev, 0.0, w)
    pain, pc = pain_cost(limit_torques, grfs, body_weight, w)
    fixed = w.w1 * eff["smooth"] + w.w2 * eff["nactive"] if w.effort_enabled else 0.0
    return RewardBreakdown(
        r_vel=velocity_reward(v, w.v_target) if r_task is None else float(r_task),
        effort_activity=eff["activity"],
        effort_smooth=eff["smooth"],
        effort_nactive=eff["nactive"],
        pain_limits=pc["limits"],
        pain_grf=pc["grf"],
        effort_fixed=fixed,
        pain=pain,
        effort_enabled=w.effort_enabled,
    )


def effort_from_breakdown(b: RewardBreakdown, alpha: float) -> float:
    if not b.effort_enabled:
        return 0.0
    return alpha * b.effort_activity + b.effort_fixed


def total_reward(b: RewardBreakdown, alpha: float) -> float:
    """r_vel - c_effort(alpha) - c_pain, recomposed from stored terms."""
    return b.r_vel - effort_from_breakdown(b, alpha) - b.pain


def running_reward(v: float, self_collision: float, w_coll: float,
                   body_weight: float = 1.0) -> float:
    """Maximal-speed task reward: COM velocity minus a self-collision penalty.

    ``self_collision`` is in newtons and is normalized by ``body_weight``.
    """
    return v - w_coll * (self_collision / body_weight)
