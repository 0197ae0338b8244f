"""Planar articulated biped: model definition, state, and fixed-step dynamics.

Bodies form a tree rooted at the world. The root joint is either a 3-DOF
``planar`` joint (floating pelvis) or a ``hinge`` pinned to the world; all
other joints are hinges. Equations of motion are written in generalized
coordinates and advanced with semi-implicit Euler.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from natwalk import _kernels as K
from natwalk.contact import ContactParams, ContactReport, ContactSphere
from natwalk.muscle import MuscleSpec
from natwalk.terrain import Terrain, flat

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

SCHEMA_ID = "natwalk.model/1"
DEFAULT_MODEL = "h0918_planar.toml"
STANDARD_GRAVITY = 9.81


class ModelError(ValueError):
    """Raised for malformed or physically invalid model documents."""


class SimulationDiverged(RuntimeError):
    """The state left its configured bounds or became non-finite."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class Segment:
    name: str
    mass: float
    inertia: float
    length: float
    com: tuple[float, float]


@dataclass(frozen=True)
class Joint:
    name: str
    parent: str
    child: str
    type: str = "hinge"
    origin: tuple[float, float] = (0.0, 0.0)
    limits: tuple[float, float] | None = None
    limit_stiffness: float = 50.0
    limit_damping: float = 2.0
    dofs: tuple[str, ...] = ()

    @property
    def has_limits(self) -> bool:
        return self.limits is not None


@dataclass(frozen=True)
class Leg:
    name: str
    hip: str
    knee: str
    ankle: str
    foot: str


@dataclass(frozen=True)
class ModelSpec:
    name: str
    segments: tuple[Segment, ...]
    joints: tuple[Joint, ...]
    muscles: tuple[MuscleSpec, ...] = ()
    contact_spheres: tuple[ContactSphere, ...] = ()
    collision_spheres: tuple[ContactSphere, ...] = ()
    contact: ContactParams = field(default_factory=ContactParams)
    legs: tuple[Leg, ...] = ()
    gravity: float = STANDARD_GRAVITY
    max_abs_q: float = 1e3
    max_abs_qdot: float = 5e2
    enable_muscles: bool = True
    enable_contacts: bool = True
    enable_limits: bool = True
    schema: str = SCHEMA_ID

    def __post_init__(self):
        _validate(self)

    # --- derived quantities ------------------------------------------------

    @cached_property
    def body_order(self) -> tuple[str, ...]:
        """Segment names sorted so parents precede children."""
        by_child = {j.child: j for j in self.joints}
        order: list[str] = []
        placed = {"world"}
        pending = [s.name for s in self.segments]
        while pending:
            # depth-first in declaration order keeps each limb's dofs contiguous
            stack = [s for s in pending if by_child[s].parent in placed][:1]
            if not stack:
                raise ModelError("kinematic tree is not connected to the world")
            while stack:
                s = stack.pop()
                order.append(s)
                placed.add(s)
                pending.remove(s)
                stack.extend(reversed([c for c in pending if by_child[c].parent == s]))
        return tuple(order)

    @cached_property
    def dof_names(self) -> tuple[str, ...]:
        by_child = {j.child: j for j in self.joints}
        names: list[str] = []
        for body in self.body_order:
            names.extend(by_child[body].dofs)
        return tuple(names)

    @property
    def n_dof(self) -> int:
        return len(self.dof_names)

    @property
    def n_muscles(self) -> int:
        return len(self.muscles)

    @cached_property
    def dof_index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.dof_names)}

    @property
    def total_mass(self) -> float:
        return float(sum(s.mass for s in self.segments))

    @property
    def body_weight(self) -> float:
        return self.gravity * self.total_mass

    @cached_property
    def feet(self) -> tuple[str, ...]:
        seen: list[str] = []
        for s in self.contact_spheres:
            if s.foot not in seen:
                seen.append(s.foot)
        return tuple(seen)

    @cached_property
    def limited_joints(self) -> tuple[Joint, ...]:
        return tuple(j for j in self.joints if j.type == "hinge" and j.has_limits)

    @property
    def root_joint(self) -> Joint:
        return next(j for j in self.joints if j.parent == "world")

    def with_options(self, **changes) -> "ModelSpec":
        """Copy with toggles changed, e.g. ``enable_muscles=False, gravity=0``."""
        return dataclasses.replace(self, **changes)

    @cached_property
    def arrays(self) -> "_ModelArrays":
        return _compile(self)


def _validate(model: ModelSpec) -> None:
    names = [s.name for s in model.segments]
    if len(set(names)) != len(names):
        raise ModelError("duplicate segment names")
    if not model.segments:
        raise ModelError("model has no segments")
    for s in model.segments:
        if not (s.mass > 0 and s.inertia > 0 and s.length > 0):
            raise ModelError(f"segment {s.name!r}: mass, inertia and length must be positive")
    seg = set(names)
    children: dict[str, Joint] = {}
    for j in model.joints:
        if j.child not in seg:
            raise ModelError(f"joint {j.name!r}: unknown child segment {j.child!r}")
        if j.parent != "world" and j.parent not in seg:
            raise ModelError(f"joint {j.name!r}: unknown parent segment {j.parent!r}")
        if j.child in children:
            raise ModelError(f"segment {j.child!r} has more than one parent joint")
        if j.type not in ("planar", "hinge"):
            raise ModelError(f"joint {j.name!r}: unsupported type {j.type!r}")
        if j.type == "planar" and j.parent != "world":
            raise ModelError(f"joint {j.name!r}: planar joints must attach to the world")
        if j.limits is not None:
            lo, hi = j.limits
            if not lo < hi:
                raise ModelError(f"joint {j.name!r}: lower limit must be below upper limit")
            if j.limit_stiffness < 0 or j.limit_damping < 0:
                raise ModelError(f"joint {j.name!r}: negative limit stiffness/damping")
        children[j.child] = j
    missing = seg - set(children)
    if missing:
        raise ModelError(f"segments without a parent joint: {sorted(missing)}")
    if sum(j.parent == "world" for j in model.joints) != 1:
        raise ModelError("exactly one joint must attach to the world")
    model.body_order  # raises on cycles / disconnected parts
    dofs = model.dof_names
    if len(set(dofs)) != len(dofs):
        raise ModelError("duplicate degree-of-freedom names")
    for m in model.muscles:
        for joint, _ in m.moment_arms:
            if joint not in dofs:
                raise ModelError(f"muscle {m.name!r}: unknown joint {joint!r}")
    for s in model.contact_spheres + model.collision_spheres:
        if s.body not in seg:
            raise ModelError(f"contact sphere on unknown segment {s.body!r}")
    for s in model.contact_spheres:
        if s.foot is None:
            raise ModelError("ground contact spheres need a foot label")
    for foot in {s.foot for s in model.contact_spheres}:
        if sum(s.foot == foot for s in model.contact_spheres) < 2:
            raise ModelError(f"foot {foot!r} needs at least two contact spheres")
    for leg in model.legs:
        for joint in (leg.hip, leg.knee, leg.ankle):
            if joint not in dofs:
                raise ModelError(f"leg {leg.name!r}: unknown joint {joint!r}")
        if leg.foot not in {s.foot for s in model.contact_spheres}:
            raise ModelError(f"leg {leg.name!r}: unknown foot {leg.foot!r}")
    if model.gravity < 0:
        raise ModelError("gravity must be non-negative")


# --------------------------------------------------------------------------
# loading


def load_model(document: str | Path | None = None) -> ModelSpec:
    """Parse a TOML model document (text or path); ``None`` loads the default."""
    if document is None:
        text = resources.files("natwalk.data").joinpath(DEFAULT_MODEL).read_text()
    elif isinstance(document, Path) or (isinstance(document, str) and "\n" not in document
                                         and document.endswith(".toml")):
        text = Path(document).read_text(encoding="utf-8")
    else:
        text = document
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ModelError(f"cannot parse model document: {exc}") from exc
    try:
        return model_from_dict(doc)
    except (KeyError, TypeError) as exc:
        raise ModelError(f"malformed model document: {exc!r}") from exc


def model_from_dict(doc: dict[str, Any]) -> ModelSpec:
    schema = doc.get("schema")
    if schema != SCHEMA_ID:
        raise ModelError(f"unsupported model schema {schema!r}, expected {SCHEMA_ID!r}")
    segments = tuple(
        Segment(
            name=s["name"],
            mass=float(s["mass"]),
            inertia=float(s["inertia"]),
            length=float(s["length"]),
            com=(float(s["com"][0]), float(s["com"][1])),
        )
        for s in doc["segments"]
    )
    joints = []
    for j in doc["joints"]:
        jtype = j.get("type", "hinge")
        if jtype == "planar":
            dofs = tuple(j.get("dofs", [f"{j['name']}_tx", f"{j['name']}_ty", f"{j['name']}_rz"]))
            if len(dofs) != 3:
                raise ModelError(f"planar joint {j['name']!r} needs three dof names")
        else:
            dofs = (j["name"],)
        limits = j.get("limits")
        joints.append(
            Joint(
                name=j["name"],
                parent=j["parent"],
                child=j["child"],
                type=jtype,
                origin=tuple(float(v) for v in j.get("origin", (0.0, 0.0))),
                limits=None if limits is None else (float(limits[0]), float(limits[1])),
                limit_stiffness=float(j.get("limit_stiffness", 50.0)),
                limit_damping=float(j.get("limit_damping", 2.0)),
                dofs=dofs,
            )
        )
    try:
        muscles = tuple(
            MuscleSpec(
                name=m["name"],
                f_max=float(m["f_max"]),
                l_opt=float(m["l_opt"]),
                l_slack=float(m["l_slack"]),
                v_max=float(m["v_max"]),
                moment_arms=tuple((k, float(v)) for k, v in m["arms"].items()),
                l_ref=None if "l_ref" not in m else float(m["l_ref"]),
                tau_act=float(m.get("tau_act", 0.01)),
                tau_deact=float(m.get("tau_deact", 0.04)),
            )
            for m in doc.get("muscles", [])
        )
        spheres = tuple(
            ContactSphere(s["body"], tuple(s["offset"]), float(s["radius"]), foot=s["foot"])
            for s in doc.get("contact_spheres", [])
        )
        collision = tuple(
            ContactSphere(s["body"], tuple(s["offset"]), float(s["radius"]), side=s["side"])
            for s in doc.get("collision_spheres", [])
        )
        contact = ContactParams(**doc.get("contact", {}))
    except ValueError as exc:
        raise ModelError(str(exc)) from exc
    legs = tuple(Leg(**leg) for leg in doc.get("legs", []))
    sim = doc.get("simulation", {})
    return ModelSpec(
        name=doc.get("name", "model"),
        segments=segments,
        joints=tuple(joints),
        muscles=muscles,
        contact_spheres=spheres,
        collision_spheres=collision,
        contact=contact,
        legs=legs,
        gravity=float(doc.get("gravity", STANDARD_GRAVITY)),
        max_abs_q=float(sim.get("max_abs_q", 1e3)),
        max_abs_qdot=float(sim.get("max_abs_qdot", 5e2)),
    )


# --------------------------------------------------------------------------
# flat arrays for the compiled kernels


@dataclass(frozen=True)
class _ModelArrays:
    parent: np.ndarray
    jtype: np.ndarray
    dof0: np.ndarray
    jorigin: np.ndarray
    com: np.ndarray
    mass: np.ndarray
    inertia: np.ndarray
    lim_dof: np.ndarray
    lim_lower: np.ndarray
    lim_upper: np.ndarray
    lim_k: np.ndarray
    lim_c: np.ndarray
    arms: np.ndarray
    l_ref: np.ndarray
    l_slack: np.ndarray
    f_max: np.ndarray
    l_opt: np.ndarray
    v_max: np.ndarray
    tau_act: np.ndarray
    tau_deact: np.ndarray
    sph_body: np.ndarray
    sph_local: np.ndarray
    sph_radius: np.ndarray
    sph_foot: np.ndarray
    n_feet: int
    col_body: np.ndarray
    col_local: np.ndarray
    col_radius: np.ndarray
    col_side: np.ndarray
    params: np.ndarray

    def body_args(self):
        return (self.parent, self.jtype, self.dof0, self.jorigin, self.com, self.mass,
                self.inertia)


def _compile(model: ModelSpec) -> _ModelArrays:
    order = model.body_order
    body_idx = {name: i for i, name in enumerate(order)}
    seg = {s.name: s for s in model.segments}
    by_child = {j.child: j for j in model.joints}
    dof_index = model.dof_index
    nb = len(order)

    parent = np.empty(nb, dtype=np.int64)
    jtype = np.empty(nb, dtype=np.int64)
    dof0 = np.empty(nb, dtype=np.int64)
    jorigin = np.zeros((nb, 2))
    com = np.zeros((nb, 2))
    mass = np.empty(nb)
    inertia = np.empty(nb)
    for b, name in enumerate(order):
        j = by_child[name]
        parent[b] = -1 if j.parent == "world" else body_idx[j.parent]
        jtype[b] = K.JOINT_PLANAR if j.type == "planar" else K.JOINT_HINGE
        dof0[b] = dof_index[j.dofs[0]]
        jorigin[b] = j.origin
        com[b] = seg[name].com
        mass[b] = seg[name].mass
        inertia[b] = seg[name].inertia

    lim = model.limited_joints
    arms = np.zeros((model.n_muscles, model.n_dof))
    for m, spec in enumerate(model.muscles):
        for joint, r in spec.moment_arms:
            arms[m, dof_index[joint]] += r

    def muscle_attr(attr):
        return np.array([getattr(m, attr) for m in model.muscles], dtype=float)

    feet = {f: i for i, f in enumerate(model.feet)}
    sides = {s: i for i, s in enumerate(dict.fromkeys(c.side for c in model.collision_spheres))}
    c = model.contact
    params = np.zeros(K.N_PARAMS)
    params[K.P_GRAVITY] = model.gravity
    params[K.P_K] = c.stiffness
    params[K.P_N] = c.exponent
    params[K.P_C] = c.damping
    params[K.P_MU_S] = c.mu_static
    params[K.P_MU_D] = c.mu_dynamic
    params[K.P_MU_V] = c.mu_viscous
    params[K.P_V_REF] = c.slip_velocity
    params[K.P_MAX_Q] = model.max_abs_q
    params[K.P_MAX_QD] = model.max_abs_qdot
    params[K.P_MUSCLES_ON] = float(model.enable_muscles)
    params[K.P_CONTACTS_ON] = float(model.enable_contacts)
    params[K.P_LIMITS_ON] = float(model.enable_limits)

    def sphere_arrays(spheres):
        body = np.array([body_idx[s.body] for s in spheres], dtype=np.int64)
        local = np.array([s.offset for s in spheres], dtype=float).reshape(-1, 2)
        radius = np.array([s.radius for s in spheres], dtype=float)
        return body, local, radius

    sph_body, sph_local, sph_radius = sphere_arrays(model.contact_spheres)
    col_body, col_local, col_radius = sphere_arrays(model.collision_spheres)
    return _ModelArrays(
        parent=parent, jtype=jtype, dof0=dof0, jorigin=jorigin, com=com, mass=mass,
        inertia=inertia,
        lim_dof=np.array([dof_index[j.name] for j in lim], dtype=np.int64),
        lim_lower=np.array([j.limits[0] for j in lim], dtype=float),
        lim_upper=np.array([j.limits[1] for j in lim], dtype=float),
        lim_k=np.array([j.limit_stiffness for j in lim], dtype=float),
        lim_c=np.array([j.limit_damping for j in lim], dtype=float),
        arms=arms,
        l_ref=muscle_attr("l_ref"), l_slack=muscle_attr("l_slack"),
        f_max=muscle_attr("f_max"), l_opt=muscle_attr("l_opt"), v_max=muscle_attr("v_max"),
        tau_act=muscle_attr("tau_act"), tau_deact=muscle_attr("tau_deact"),
        sph_body=sph_body, sph_local=sph_local, sph_radius=sph_radius,
        sph_foot=np.array([feet[s.foot] for s in model.contact_spheres], dtype=np.int64),
        n_feet=len(feet),
        col_body=col_body, col_local=col_local, col_radius=col_radius,
        col_side=np.array([sides[s.side] for s in model.collision_spheres], dtype=np.int64),
        params=params,
    )


# --------------------------------------------------------------------------
# state and stepping


def _frozen(x) -> np.ndarray:
    arr = np.array(x, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SimState:
    q: np.ndarray
    qd: np.ndarray
    a: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "q", _frozen(self.q))
        object.__setattr__(self, "qd", _frozen(self.qd))
        object.__setattr__(self, "a", _frozen(self.a))
        object.__setattr__(self, "t", float(self.t))
        if self.q.shape != self.qd.shape:
            raise ValueError("q and qd must have the same dimension")
        if self.a.size and (self.a.min() < 0.0 or self.a.max() > 1.0):
            raise ValueError("activations must lie in [0, 1]")

    def __eq__(self, other):
        if not isinstance(other, SimState):
            return NotImplemented
        return (self.t == other.t and np.array_equal(self.q, other.q)
                and np.array_equal(self.qd, other.qd) and np.array_equal(self.a, other.a))

    def replace(self, **changes) -> "SimState":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class StepReport:
    grf_per_foot: np.ndarray  # N, vertical, one entry per foot
    joint_limit_torques: np.ndarray  # |tau| N*m, one entry per limited joint
    com_velocity: float  # m/s, horizontal
    self_collision_force: float  # N
    com_x: float = 0.0
    clamped_fibers: int = 0


def zero_state(model: ModelSpec) -> SimState:
    return SimState(np.zeros(model.n_dof), np.zeros(model.n_dof), np.zeros(model.n_muscles))


def step(model: ModelSpec, state: SimState, u, dt: float, terrain: Terrain | None = None,
         n_substeps: int = 1) -> tuple[SimState, StepReport]:
    """Advance ``n_substeps`` semi-implicit Euler steps of size ``dt``.

    Excitations ``u`` are held constant over the call. Raises
    :class:`SimulationDiverged` if the state becomes non-finite or leaves the
    model's bounds.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = np.ascontiguousarray(u, dtype=np.float64)
    if u.shape != (model.n_muscles,):
        raise ValueError(f"expected {model.n_muscles} excitations, got shape {u.shape}")
    if not np.all((u >= 0.0) & (u <= 1.0)):
        raise ValueError("excitations must lie in [0, 1]")
    terrain = terrain or _FLAT
    A = model.arrays
    q = np.array(state.q)
    qd = np.array(state.qd)
    a = np.array(state.a)
    report = np.zeros(K.R_HEADER + A.n_feet + A.lim_dof.shape[0])
    K.integrate(
        A.parent, A.jtype, A.dof0, A.jorigin, A.com, A.mass, A.inertia,
        A.lim_dof, A.lim_lower, A.lim_upper, A.lim_k, A.lim_c,
        A.arms, A.l_ref, A.l_slack, A.f_max, A.l_opt, A.v_max, A.tau_act, A.tau_deact,
        A.sph_body, A.sph_local, A.sph_radius, A.sph_foot, A.n_feet,
        A.col_body, A.col_local, A.col_radius, A.col_side,
        terrain.xs, terrain.ys, A.params,
        q, qd, a, u, float(dt), int(n_substeps), report,
    )
    new = SimState(q, qd, a, state.t + dt * n_substeps) if report[K.R_DIVERGED] == 0.0 else None
    if new is None:
        raise SimulationDiverged(f"simulation diverged near t={state.t:.4f}s",
                                 state=(q, qd, a))
    em = _energy_momentum(model, new)
    nf = A.n_feet
    return new, StepReport(
        grf_per_foot=report[K.R_HEADER:K.R_HEADER + nf].copy(),
        joint_limit_torques=report[K.R_HEADER + nf:].copy(),
        com_velocity=float(em[6]),
        self_collision_force=float(report[K.R_SELF_COLLISION]),
        com_x=float(em[4]),
        clamped_fibers=int(report[K.R_CLAMPED_FIBERS]),
    )


_FLAT = flat()


def joint_limit_torque(angle: float, angular_velocity: float, joint: Joint) -> float:
    """Signed restoring torque of a compliant joint limit (zero inside)."""
    if joint.limits is None:
        raise ValueError(f"joint {joint.name!r} has no limits")
    lo, hi = joint.limits
    return K.limit_torque(float(angle), float(angular_velocity), lo, hi,
                          joint.limit_stiffness, joint.limit_damping)


def _energy_momentum(model: ModelSpec, state: SimState) -> np.ndarray:
    A = model.arrays
    out = np.zeros(8)
    K.energy_momentum(A.parent, A.jtype, A.dof0, A.jorigin, A.com, A.mass, A.inertia,
                      model.gravity, np.asarray(state.q), np.asarray(state.qd), out)
    return out


def mechanical_energy(model: ModelSpec, state: SimState) -> float:
    """Kinetic plus gravitational potential energy (J)."""
    em = _energy_momentum(model, state)
    return float(em[0] + em[1])


def linear_momentum(model: ModelSpec, state: SimState) -> np.ndarray:
    return _energy_momentum(model, state)[2:4].copy()


def center_of_mass(model: ModelSpec, state: SimState) -> tuple[np.ndarray, np.ndarray]:
    em = _energy_momentum(model, state)
    return em[4:6].copy(), em[6:8].copy()


def sphere_positions(model: ModelSpec, q, spheres=None) -> np.ndarray:
    """World positions of sphere centers (defaults to ground contact spheres)."""
    spheres = model.contact_spheres if spheres is None else spheres
    A = model.arrays
    idx = {name: i for i, name in enumerate(model.body_order)}
    bodies = np.array([idx[s.body] for s in spheres], dtype=np.int64)
    local = np.array([s.offset for s in spheres], dtype=float).reshape(-1, 2)
    out = np.zeros((len(spheres), 2))
    K.world_points(A.parent, A.jtype, A.dof0, A.jorigin, np.asarray(q, dtype=float),
                   bodies, local, out)
    return out


def foot_clearance(model: ModelSpec, q, terrain: Terrain | None = None) -> dict[str, float]:
    """Lowest sphere-surface height above the terrain, per foot (m)."""
    terrain = terrain or _FLAT
    pos = sphere_positions(model, q)
    out: dict[str, float] = {}
    for s, (x, y) in zip(model.contact_spheres, pos):
        h, _ = K.terrain_height_slope(terrain.xs, terrain.ys, x)
        gap = y - s.radius - h
        out[s.foot] = min(out.get(s.foot, math.inf), gap)
    return out


def contact_forces(model: ModelSpec, state: SimState, terrain: Terrain | None = None,
                   params: ContactParams | None = None) -> tuple[np.ndarray, ContactReport]:
    """Generalized contact forces and the per-foot vertical GRF at ``state``."""
    terrain = terrain or _FLAT
    if params is not None:
        model = dataclasses.replace(model, contact=params)
    model = model.with_options(enable_muscles=False, enable_limits=False, enable_contacts=True)
    A = model.arrays
    n, nb = model.n_dof, len(model.body_order)
    q = np.asarray(state.q, dtype=float)
    qd = np.asarray(state.qd, dtype=float)
    origin = np.zeros((nb, 2))
    phi = np.zeros(nb)
    omega = np.zeros(nb)
    K.forward_kinematics(A.parent, A.jtype, A.dof0, A.jorigin, q, qd, origin, phi, omega)
    Q = np.zeros(n)
    J = np.zeros((2, n))
    grf = np.zeros(A.n_feet)
    K.applied_forces(A.parent, A.jtype, A.dof0, origin, phi, q, qd, np.asarray(state.a, float),
                     A.lim_dof, A.lim_lower, A.lim_upper, A.lim_k, A.lim_c,
                     A.arms, A.l_ref, A.l_slack, A.f_max, A.l_opt, A.v_max,
                     A.sph_body, A.sph_local, A.sph_radius, A.sph_foot,
                     terrain.xs, terrain.ys, A.params, Q, J,
                     grf, np.zeros(A.lim_dof.shape[0]), np.zeros(model.n_muscles))
    coll = K.self_collision(A.parent, A.jtype, A.dof0, origin, phi, qd, A.col_body,
                            A.col_local, A.col_radius, A.col_side, A.params, J)
    return Q, ContactReport(grf=grf, self_collision=float(coll))


# --------------------------------------------------------------------------
# initial states

ELEVATION_MIN = 0.05


def reset(model: ModelSpec, rng_seed, terrain: Terrain | None = None,
          perturbation: float = 0.02) -> SimState:
    """Randomized standing start with one leg lifted.

    The pelvis is placed at ``terrain.start_x`` at standing height; one leg,
    chosen at random, gets a flexed hip and knee so its foot clears the ground
    by at least 5 cm. The stance foot is set flat and touching the ground
    without penetration.
    """
    terrain = terrain or _FLAT
    if len(model.legs) < 2:
        raise ModelError("reset needs a model with two legs")
    rng = np.random.default_rng(rng_seed)
    idx = model.dof_index
    root = model.root_joint
    tx, ty, tilt = (idx[d] for d in root.dofs)
    n = model.n_dof

    q = np.zeros(n)
    q[tilt] = rng.normal(0.0, perturbation)
    qd = rng.normal(0.0, perturbation, size=n)
    qd[ty] = 0.0
    lifted = int(rng.integers(len(model.legs)))
    hip_lift = rng.uniform(0.35, 0.6)
    knee_lift = rng.uniform(0.5, 0.9)

    for k, leg in enumerate(model.legs):
        if k == lifted:
            q[idx[leg.hip]] = hip_lift
            q[idx[leg.knee]] = -knee_lift
        else:
            q[idx[leg.hip]] = rng.normal(0.0, perturbation)
            q[idx[leg.knee]] = -abs(rng.normal(0.05, perturbation))
        # keep the foot sole roughly level
        q[idx[leg.ankle]] = -(q[tilt] + q[idx[leg.hip]] + q[idx[leg.knee]])
        q[idx[leg.ankle]] += rng.normal(0.0, perturbation) if k == lifted else 0.0

    _clip_to_limits(model, q)
    q[tx] = terrain.start_x
    stance = [leg.foot for k, leg in enumerate(model.legs) if k != lifted]
    swing = model.legs[lifted]
    clear = foot_clearance(model, q, terrain)
    q[ty] -= min(clear[f] for f in stance)
    for _ in range(50):
        if foot_clearance(model, q, terrain)[swing.foot] >= ELEVATION_MIN:
            break
        q[idx[swing.hip]] += 0.05
        q[idx[swing.knee]] -= 0.05
        q[idx[swing.ankle]] = -(q[tilt] + q[idx[swing.hip]] + q[idx[swing.knee]])
        _clip_to_limits(model, q)
    else:
        raise ModelError("could not lift the swing foot; check the model geometry")
    return SimState(q, qd, np.zeros(model.n_muscles), 0.0)


def _clip_to_limits(model: ModelSpec, q: np.ndarray) -> None:
    idx = model.dof_index
    for j in model.limited_joints:
        lo, hi = j.limits
        q[idx[j.name]] = min(max(q[idx[j.name]], lo), hi)
