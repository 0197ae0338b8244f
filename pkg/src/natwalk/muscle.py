"""Hill-type muscle-tendon units with rigid tendons and constant moment arms.

Fiber velocity is signed as a lengthening rate (``d l_fiber / dt``): the
normalized velocity ``v_fiber / (v_max * l_opt)`` equals -1 at maximal
shortening, where the force-velocity factor reaches zero, and the eccentric
branch saturates at 1.5.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from natwalk import _kernels as K

FIBER_EPS = K.FIBER_EPS
TAU_ACT = 0.01
TAU_DEACT = 0.04


@dataclass(frozen=True)
class MuscleSpec:
    name: str
    f_max: float
    l_opt: float
    l_slack: float
    v_max: float
    moment_arms: tuple[tuple[str, float], ...]
    l_ref: float | None = None  # fiber length at the reference posture (q = 0)
    tau_act: float = TAU_ACT
    tau_deact: float = TAU_DEACT

    def __post_init__(self):
        if not (self.f_max > 0 and self.l_opt > 0 and self.v_max > 0):
            raise ValueError(f"muscle {self.name!r}: f_max, l_opt and v_max must be positive")
        if self.l_slack < 0:
            raise ValueError(f"muscle {self.name!r}: negative tendon slack length")
        if not self.moment_arms:
            raise ValueError(f"muscle {self.name!r}: needs at least one moment arm")
        if not (0 < self.tau_act <= self.tau_deact):
            raise ValueError(
                f"muscle {self.name!r}: need 0 < tau_act <= tau_deact"
            )
        if self.l_ref is None:
            object.__setattr__(self, "l_ref", self.l_opt)
        elif self.l_ref <= 0:
            raise ValueError(f"muscle {self.name!r}: reference fiber length must be positive")
        object.__setattr__(
            self, "moment_arms", tuple((str(j), float(r)) for j, r in self.moment_arms)
        )


@dataclass
class MuscleState:
    a: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.a <= 1.0:
            raise ValueError("activation must lie in [0, 1]")


@dataclass
class KinematicsDiagnostics:
    clamped: list[str] = field(default_factory=list)


def activation_step(a: float, u: float, dt: float, tau_act: float = TAU_ACT,
                    tau_deact: float = TAU_DEACT) -> float:
    """Exact first-order lag of activation toward excitation over ``dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return K.activation_update(float(a), float(u), float(dt), float(tau_act), float(tau_deact))


def force_length(l_norm: float) -> float:
    return K.force_length(float(l_norm))


def force_velocity(v_norm: float) -> float:
    return K.force_velocity(float(v_norm))


def force_passive(l_norm: float) -> float:
    return K.force_passive(float(l_norm))


def muscle_force(a: float, l_fiber: float, v_fiber: float, spec: MuscleSpec) -> float:
    """F = F_max * (a * f_L * f_V + f_passive), never negative."""
    return K.hill_force(float(a), float(l_fiber), float(v_fiber), spec.f_max, spec.l_opt,
                        spec.v_max)


def muscle_kinematics(q, qd, spec: MuscleSpec, dof_index: dict[str, int],
                      diagnostics: KinematicsDiagnostics | None = None) -> tuple[float, float]:
    """Fiber length and lengthening velocity under the affine path model.

    ``dof_index`` maps joint names to positions in ``q``.
    """
    length = spec.l_ref
    vel = 0.0
    for joint, arm in spec.moment_arms:
        d = dof_index[joint]
        length -= arm * q[d]
        vel -= arm * qd[d]
    if length <= FIBER_EPS:
        length = FIBER_EPS
        if diagnostics is not None:
            diagnostics.clamped.append(spec.name)
    return float(length), float(vel)


def joint_torques(forces, specs: list[MuscleSpec], joints: list[str]) -> np.ndarray:
    """Per-joint torque sum(arm * force) in the order given by ``joints``."""
    forces = np.asarray(forces, dtype=float)
    if forces.shape != (len(specs),):
        raise ValueError(f"expected {len(specs)} muscle forces, got {forces.shape}")
    index = {name: i for i, name in enumerate(joints)}
    tau = np.zeros(len(joints))
    for f, spec in zip(forces, specs):
        for joint, arm in spec.moment_arms:
            tau[index[joint]] += arm * f
    return tau
