"""Compliant sphere contact: Hunt-Crossley normal force and smooth friction.

The friction law is a tanh-regularized Coulomb curve with a Stribeck bump
that rises above ``mu_dynamic`` but stays below ``mu_static`` times the
normal force near the reference slip velocity, plus a viscous term
``mu_viscous * |v_t|`` that acts only while the sphere is in contact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from natwalk import _kernels as K


@dataclass(frozen=True)
class ContactSphere:
    body: str
    offset: tuple[float, float]
    radius: float
    foot: str | None = None  # label used to aggregate GRF; None for collision spheres
    side: str | None = None  # leg label for self-collision spheres

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("contact sphere radius must be positive")
        object.__setattr__(self, "offset", (float(self.offset[0]), float(self.offset[1])))


@dataclass(frozen=True)
class ContactParams:
    stiffness: float = 2e6
    exponent: float = 1.5
    damping: float = 1.0
    mu_static: float = 0.9
    mu_dynamic: float = 0.8
    mu_viscous: float = 0.5
    slip_velocity: float = 0.05

    def __post_init__(self):
        values = (self.stiffness, self.exponent, self.damping, self.mu_static,
                  self.mu_dynamic, self.mu_viscous)
        if any(v < 0 for v in values):
            raise ValueError("contact parameters must be non-negative")
        if self.mu_static < self.mu_dynamic:
            raise ValueError("static friction must be >= dynamic friction")
        if self.slip_velocity <= 0:
            raise ValueError("slip_velocity must be positive")


@dataclass(frozen=True)
class ContactReport:
    grf: np.ndarray  # vertical GRF per foot, N
    self_collision: float  # N


def normal_force(penetration: float, penetration_rate: float, params: ContactParams) -> float:
    """k * d^n * (1 + c * d_dot) for d > 0, clamped at zero (no suction)."""
    return K.hunt_crossley(float(penetration), float(penetration_rate), params.stiffness,
                           params.exponent, params.damping)


def friction_force(normal: float, tangential_velocity: float, params: ContactParams) -> float:
    if normal < 0:
        raise ValueError("normal force must be non-negative")
    return K.friction(float(normal), float(tangential_velocity), params.mu_static,
                      params.mu_dynamic, params.mu_viscous, params.slip_velocity)


def resolve_contacts(state, model, terrain, params: ContactParams | None = None):
    """Generalized contact forces and per-foot GRF at ``state``.

    Muscles and joint limits are switched off so only contact contributes.
    """
    from natwalk.biomech import contact_forces

    return contact_forces(model, state, terrain, params)
