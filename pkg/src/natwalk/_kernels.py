"""Compiled inner loops for the planar musculoskeletal simulator.

Everything here works on flat float/int arrays so numba can compile it.
Conventions: x forward, y up, angles counter-clockwise. Each body frame is
aligned with the world frame when all joint angles are zero.
"""

import math

import numpy as np
from numba import njit

JOINT_PLANAR = 0
JOINT_HINGE = 1

# layout of the ``params`` vector
P_GRAVITY = 0
P_K = 1
P_N = 2
P_C = 3
P_MU_S = 4
P_MU_D = 5
P_MU_V = 6
P_V_REF = 7
P_MAX_Q = 8
P_MAX_QD = 9
P_MUSCLES_ON = 10
P_CONTACTS_ON = 11
P_LIMITS_ON = 12
N_PARAMS = 13

# layout of the per-call report vector (feet and joints appended after)
R_SELF_COLLISION = 0
R_CLAMPED_FIBERS = 1
R_DIVERGED = 2
R_HEADER = 3

FL_WIDTH = 0.45
FV_CURVATURE = 0.25
FV_ECCENTRIC_MAX = 1.5
FV_ECCENTRIC_SHAPE = 0.1  # matches the concentric slope at zero velocity
PE_SHAPE = 4.0
PE_STRAIN = 0.6
FIBER_EPS = 1e-4


# --------------------------------------------------------------------------
# muscle primitives


@njit(cache=True)
def activation_update(a, u, dt, tau_act, tau_deact):
    tau = tau_act if u > a else tau_deact
    a_new = u + (a - u) * math.exp(-dt / tau)
    if a_new < 0.0:
        return 0.0
    if a_new > 1.0:
        return 1.0
    return a_new


@njit(cache=True)
def force_length(l_norm):
    d = (l_norm - 1.0) / FL_WIDTH
    return math.exp(-d * d)


@njit(cache=True)
def force_velocity(v_norm):
    # v_norm > 0 is lengthening; -1 is maximal shortening
    if v_norm <= -1.0:
        return 0.0
    if v_norm <= 0.0:
        return (1.0 + v_norm) / (1.0 - v_norm / FV_CURVATURE)
    return FV_ECCENTRIC_MAX - (FV_ECCENTRIC_MAX - 1.0) * FV_ECCENTRIC_SHAPE / (
        FV_ECCENTRIC_SHAPE + v_norm
    )


@njit(cache=True)
def force_passive(l_norm):
    if l_norm <= 1.0:
        return 0.0
    return (math.exp(PE_SHAPE * (l_norm - 1.0) / PE_STRAIN) - 1.0) / (
        math.exp(PE_SHAPE) - 1.0
    )


@njit(cache=True)
def hill_force(a, l_fiber, v_fiber, f_max, l_opt, v_max):
    l_norm = l_fiber / l_opt
    v_norm = v_fiber / (v_max * l_opt)
    f = f_max * (a * force_length(l_norm) * force_velocity(v_norm) + force_passive(l_norm))
    return f if f > 0.0 else 0.0


# --------------------------------------------------------------------------
# contact primitives


@njit(cache=True)
def hunt_crossley(depth, depth_rate, k, n, c):
    if depth <= 0.0:
        return 0.0
    f = k * depth**n * (1.0 + c * depth_rate)
    return f if f > 0.0 else 0.0


@njit(cache=True)
def friction(normal, v_t, mu_s, mu_d, mu_v, v_ref):
    """Regularized Coulomb + Stribeck + viscous friction, odd in ``v_t``.

    The viscous part ``mu_v * |v_t|`` acts only while in contact (normal > 0).
    """
    if normal <= 0.0 or v_t == 0.0:
        return 0.0
    s = abs(v_t) / v_ref
    mag = mu_d * math.tanh(s) + (mu_s - mu_d) * s * math.exp(0.5 * (1.0 - s * s))
    mag = normal * mag + mu_v * abs(v_t)
    return -mag if v_t > 0.0 else mag


@njit(cache=True)
def terrain_height_slope(xs, ys, x):
    n = xs.shape[0]
    if x <= xs[0]:
        return ys[0], 0.0
    if x >= xs[n - 1]:
        return ys[n - 1], 0.0
    i = np.searchsorted(xs, x, side="right") - 1
    slope = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])
    return ys[i] + slope * (x - xs[i]), slope


# --------------------------------------------------------------------------
# kinematics


@njit(cache=True)
def forward_kinematics(parent, jtype, dof0, jorigin, q, qd, origin, phi, omega):
    nb = parent.shape[0]
    for b in range(nb):
        p = parent[b]
        if p < 0:
            bphi = 0.0
            bom = 0.0
            bx = 0.0
            by = 0.0
        else:
            bphi = phi[p]
            bom = omega[p]
            bx = origin[p, 0]
            by = origin[p, 1]
        c = math.cos(bphi)
        s = math.sin(bphi)
        jx = bx + c * jorigin[b, 0] - s * jorigin[b, 1]
        jy = by + s * jorigin[b, 0] + c * jorigin[b, 1]
        d = dof0[b]
        if jtype[b] == JOINT_PLANAR:
            origin[b, 0] = jx + q[d]
            origin[b, 1] = jy + q[d + 1]
            phi[b] = bphi + q[d + 2]
            omega[b] = bom + qd[d + 2]
        else:
            origin[b, 0] = jx
            origin[b, 1] = jy
            phi[b] = bphi + q[d]
            omega[b] = bom + qd[d]


@njit(cache=True)
def body_point(origin, phi, b, lx, ly):
    c = math.cos(phi[b])
    s = math.sin(phi[b])
    return origin[b, 0] + c * lx - s * ly, origin[b, 1] + s * lx + c * ly


@njit(cache=True)
def point_jacobian(parent, jtype, dof0, origin, b, px, py, J):
    """Fill ``J`` (2 x ndof) with d(point)/dq for a world point fixed to body b."""
    J[:, :] = 0.0
    i = b
    while i >= 0:
        d = dof0[i]
        rx = px - origin[i, 0]
        ry = py - origin[i, 1]
        if jtype[i] == JOINT_PLANAR:
            J[0, d] += 1.0
            J[1, d + 1] += 1.0
            J[0, d + 2] += -ry
            J[1, d + 2] += rx
        else:
            J[0, d] += -ry
            J[1, d] += rx
        i = parent[i]


@njit(cache=True)
def point_bias_accel(parent, origin, omega, b, px, py):
    """Acceleration of a body-fixed point when qdd = 0 (centripetal terms)."""
    ax = 0.0
    ay = 0.0
    ex = px
    ey = py
    i = b
    while i >= 0:
        w2 = omega[i] * omega[i]
        ax -= w2 * (ex - origin[i, 0])
        ay -= w2 * (ey - origin[i, 1])
        ex = origin[i, 0]
        ey = origin[i, 1]
        i = parent[i]
    return ax, ay


@njit(cache=True)
def rot_dof(jtype, dof0, b):
    if jtype[b] == JOINT_PLANAR:
        return dof0[b] + 2
    return dof0[b]


# --------------------------------------------------------------------------
# dynamics


@njit(cache=True)
def mass_matrix_and_bias(parent, jtype, dof0, com, mass, inertia, origin, phi, omega,
                         gravity, M, Q, J):
    """Assemble M(q) and the gravity/centripetal generalized force into Q."""
    nb = parent.shape[0]
    n = M.shape[0]
    M[:, :] = 0.0
    for b in range(nb):
        px, py = body_point(origin, phi, b, com[b, 0], com[b, 1])
        point_jacobian(parent, jtype, dof0, origin, b, px, py, J)
        ax, ay = point_bias_accel(parent, origin, omega, b, px, py)
        m = mass[b]
        fx = -m * ax
        fy = -m * (gravity + ay)
        for i in range(n):
            ji0 = J[0, i]
            ji1 = J[1, i]
            if ji0 == 0.0 and ji1 == 0.0:
                continue
            Q[i] += ji0 * fx + ji1 * fy
            for k in range(n):
                M[i, k] += m * (ji0 * J[0, k] + ji1 * J[1, k])
        # rotational inertia couples every rotational dof on the chain
        i = b
        while i >= 0:
            di = rot_dof(jtype, dof0, i)
            k = b
            while k >= 0:
                M[di, rot_dof(jtype, dof0, k)] += inertia[b]
                k = parent[k]
            i = parent[i]


@njit(cache=True)
def cholesky_solve(M, b, L, y, x):
    n = M.shape[0]
    for i in range(n):
        for j in range(i + 1):
            s = M[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                if s <= 0.0:
                    return False
                L[i, i] = math.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * y[k]
        y[i] = s / L[i, i]
    for i in range(n - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, n):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]
    return True


@njit(cache=True)
def limit_torque(angle, velocity, lower, upper, k, c):
    if angle > upper:
        tau = -k * (angle - upper) - c * velocity
        return tau if tau < 0.0 else 0.0
    if angle < lower:
        tau = k * (lower - angle) - c * velocity
        return tau if tau > 0.0 else 0.0
    return 0.0


@njit(cache=True)
def applied_forces(parent, jtype, dof0, origin, phi, q, qd, a,
                   lim_dof, lim_lower, lim_upper, lim_k, lim_c,
                   arms, l_ref, l_slack, f_max, l_opt, v_max,
                   sph_body, sph_local, sph_radius, sph_foot,
                   terrain_x, terrain_y, params, Q, J,
                   grf, lim_tau, muscle_f):
    """Add joint-limit, muscle and contact generalized forces into ``Q``.

    Per-foot vertical GRF, signed limit torques and muscle forces are written
    to the output arrays. Returns the number of clamped fiber lengths.
    """
    n = q.shape[0]
    clamped = 0
    grf[:] = 0.0
    lim_tau[:] = 0.0
    muscle_f[:] = 0.0

    if params[P_LIMITS_ON] != 0.0:
        for j in range(lim_dof.shape[0]):
            d = lim_dof[j]
            tau = limit_torque(q[d], qd[d], lim_lower[j], lim_upper[j], lim_k[j], lim_c[j])
            lim_tau[j] = tau
            Q[d] += tau

    if params[P_MUSCLES_ON] != 0.0:
        for m in range(arms.shape[0]):
            length = l_ref[m] + l_slack[m]
            vel = 0.0
            for d in range(n):
                r = arms[m, d]
                if r != 0.0:
                    length -= r * q[d]
                    vel -= r * qd[d]
            fiber = length - l_slack[m]
            if fiber <= FIBER_EPS:
                fiber = FIBER_EPS
                clamped += 1
            f = hill_force(a[m], fiber, vel, f_max[m], l_opt[m], v_max[m])
            muscle_f[m] = f
            for d in range(n):
                r = arms[m, d]
                if r != 0.0:
                    Q[d] += r * f

    if params[P_CONTACTS_ON] != 0.0:
        k = params[P_K]
        hc_n = params[P_N]
        hc_c = params[P_C]
        for s in range(sph_body.shape[0]):
            b = sph_body[s]
            cx, cy = body_point(origin, phi, b, sph_local[s, 0], sph_local[s, 1])
            h, slope = terrain_height_slope(terrain_x, terrain_y, cx)
            inv = 1.0 / math.sqrt(1.0 + slope * slope)
            nx = -slope * inv
            ny = inv
            radius = sph_radius[s]
            depth = radius - (cy - h) * inv
            if depth <= 0.0:
                continue
            px = cx - radius * nx
            py = cy - radius * ny
            point_jacobian(parent, jtype, dof0, origin, b, px, py, J)
            vx = 0.0
            vy = 0.0
            for d in range(n):
                vx += J[0, d] * qd[d]
                vy += J[1, d] * qd[d]
            fn = hunt_crossley(depth, -(nx * vx + ny * vy), k, hc_n, hc_c)
            if fn <= 0.0:
                continue
            tx = ny
            ty = -nx
            ft = friction(fn, tx * vx + ty * vy, params[P_MU_S], params[P_MU_D],
                          params[P_MU_V], params[P_V_REF])
            fx = fn * nx + ft * tx
            fy = fn * ny + ft * ty
            for d in range(n):
                Q[d] += J[0, d] * fx + J[1, d] * fy
            if fy > 0.0:
                grf[sph_foot[s]] += fy
    return clamped


@njit(cache=True)
def self_collision(parent, jtype, dof0, origin, phi, qd, col_body, col_local,
                   col_radius, col_side, params, J):
    """Total Hunt-Crossley force magnitude between spheres of opposite sides."""
    ns = col_body.shape[0]
    n = qd.shape[0]
    total = 0.0
    for i in range(ns):
        for j in range(i + 1, ns):
            if col_side[i] == col_side[j]:
                continue
            xi, yi = body_point(origin, phi, col_body[i], col_local[i, 0], col_local[i, 1])
            xj, yj = body_point(origin, phi, col_body[j], col_local[j, 0], col_local[j, 1])
            dx = xj - xi
            dy = yj - yi
            dist = math.sqrt(dx * dx + dy * dy)
            depth = col_radius[i] + col_radius[j] - dist
            if depth <= 0.0:
                continue
            if dist > 0.0:
                nx = dx / dist
                ny = dy / dist
            else:
                nx = 0.0
                ny = 1.0
            point_jacobian(parent, jtype, dof0, origin, col_body[i], xi, yi, J)
            vix = 0.0
            viy = 0.0
            for d in range(n):
                vix += J[0, d] * qd[d]
                viy += J[1, d] * qd[d]
            point_jacobian(parent, jtype, dof0, origin, col_body[j], xj, yj, J)
            vjx = 0.0
            vjy = 0.0
            for d in range(n):
                vjx += J[0, d] * qd[d]
                vjy += J[1, d] * qd[d]
            rate = -((vjx - vix) * nx + (vjy - viy) * ny)
            total += hunt_crossley(depth, rate, params[P_K], params[P_N], params[P_C])
    return total


@njit(cache=True)
def integrate(parent, jtype, dof0, jorigin, com, mass, inertia,
              lim_dof, lim_lower, lim_upper, lim_k, lim_c,
              arms, l_ref, l_slack, f_max, l_opt, v_max, tau_act, tau_deact,
              sph_body, sph_local, sph_radius, sph_foot, n_feet,
              col_body, col_local, col_radius, col_side,
              terrain_x, terrain_y, params,
              q, qd, a, u, dt, n_steps, report):
    """Semi-implicit Euler: n_steps of size dt; q, qd, a updated in place.

    ``report`` receives [self_collision, clamped_fibers, diverged,
    grf per foot..., |limit torque| per limited joint...] evaluated at the
    final state.
    """
    n = q.shape[0]
    nb = parent.shape[0]
    nm = arms.shape[0]
    origin = np.zeros((nb, 2))
    phi = np.zeros(nb)
    omega = np.zeros(nb)
    M = np.zeros((n, n))
    L = np.zeros((n, n))
    Q = np.zeros(n)
    y = np.zeros(n)
    qdd = np.zeros(n)
    J = np.zeros((2, n))
    grf = np.zeros(n_feet)
    lim_tau = np.zeros(lim_dof.shape[0])
    muscle_f = np.zeros(nm)
    max_q = params[P_MAX_Q]
    max_qd = params[P_MAX_QD]
    clamped = 0
    diverged = False

    for _ in range(n_steps):
        for m in range(nm):
            a[m] = activation_update(a[m], u[m], dt, tau_act[m], tau_deact[m])
        forward_kinematics(parent, jtype, dof0, jorigin, q, qd, origin, phi, omega)
        Q[:] = 0.0
        mass_matrix_and_bias(parent, jtype, dof0, com, mass, inertia, origin, phi,
                             omega, params[P_GRAVITY], M, Q, J)
        clamped += applied_forces(parent, jtype, dof0, origin, phi, q, qd, a,
                                  lim_dof, lim_lower, lim_upper, lim_k, lim_c,
                                  arms, l_ref, l_slack, f_max, l_opt, v_max,
                                  sph_body, sph_local, sph_radius, sph_foot,
                                  terrain_x, terrain_y, params, Q, J,
                                  grf, lim_tau, muscle_f)
        if not cholesky_solve(M, Q, L, y, qdd):
            diverged = True
            break
        for i in range(n):
            qd[i] += dt * qdd[i]
            q[i] += dt * qd[i]
            if not (abs(q[i]) <= max_q and abs(qd[i]) <= max_qd):
                diverged = True
        if diverged:
            break

    report[:] = 0.0
    report[R_CLAMPED_FIBERS] = clamped
    if diverged:
        report[R_DIVERGED] = 1.0
        return
    forward_kinematics(parent, jtype, dof0, jorigin, q, qd, origin, phi, omega)
    Q[:] = 0.0
    applied_forces(parent, jtype, dof0, origin, phi, q, qd, a,
                   lim_dof, lim_lower, lim_upper, lim_k, lim_c,
                   arms, l_ref, l_slack, f_max, l_opt, v_max,
                   sph_body, sph_local, sph_radius, sph_foot,
                   terrain_x, terrain_y, params, Q, J, grf, lim_tau, muscle_f)
    report[R_SELF_COLLISION] = self_collision(parent, jtype, dof0, origin, phi, qd,
                                              col_body, col_local, col_radius,
                                              col_side, params, J)
    for f in range(n_feet):
        report[R_HEADER + f] = grf[f]
    for j in range(lim_tau.shape[0]):
        report[R_HEADER + n_feet + j] = abs(lim_tau[j])


@njit(cache=True)
def energy_momentum(parent, jtype, dof0, jorigin, com, mass, inertia, gravity, q, qd, out):
    """out = [kinetic, potential, px, py, com_x, com_y, com_vx, com_vy]."""
    n = q.shape[0]
    nb = parent.shape[0]
    origin = np.zeros((nb, 2))
    phi = np.zeros(nb)
    omega = np.zeros(nb)
    J = np.zeros((2, n))
    kin = 0.0
    pot = 0.0
    px = 0.0
    py = 0.0
    cx = 0.0
    cy = 0.0
    total = 0.0
    forward_kinematics(parent, jtype, dof0, jorigin, q, qd, origin, phi, omega)
    for b in range(nb):
        bx, by = body_point(origin, phi, b, com[b, 0], com[b, 1])
        point_jacobian(parent, jtype, dof0, origin, b, bx, by, J)
        vx = 0.0
        vy = 0.0
        for d in range(n):
            vx += J[0, d] * qd[d]
            vy += J[1, d] * qd[d]
        m = mass[b]
        kin += 0.5 * m * (vx * vx + vy * vy) + 0.5 * inertia[b] * omega[b] * omega[b]
        pot += m * gravity * by
        px += m * vx
        py += m * vy
        cx += m * bx
        cy += m * by
        total += m
    out[0] = kin
    out[1] = pot
    out[2] = px
    out[3] = py
    out[4] = cx / total
    out[5] = cy / total
    out[6] = px / total
    out[7] = py / total


@njit(cache=True)
def world_points(parent, jtype, dof0, jorigin, q, bodies, local, out):
    nb = parent.shape[0]
    origin = np.zeros((nb, 2))
    phi = np.zeros(nb)
    omega = np.zeros(nb)
    qd = np.zeros(q.shape[0])
    forward_kinematics(parent, jtype, dof0, jorigin, q, qd, origin, phi, omega)
    for i in range(bodies.shape[0]):
        x, y = body_point(origin, phi, bodies[i], local[i, 0], local[i, 1])
        out[i, 0] = x
        out[i, 1] = y
