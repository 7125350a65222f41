"""Independent kinematic oracles shared by the dynamics and acceptance
tests: total linear momentum, system center of mass and mechanical energy,
all built directly from the multibody geometry rather than the engine's
internal recursion."""

import numpy as np

from fwmav.engine import make_engine
from fwmav.kinematics import body_rotation, rot_y, rot_z


def _frames(eng, s, k):
    """Per-side joint rotations and angular velocities (body frame chain)."""
    sz = eng.sz[k]
    psi, theta = s[12 + 2 * k], s[13 + 2 * k]
    dpsi, dtheta = s[16 + 2 * k], s[17 + 2 * k]
    R1 = rot_z(sz * psi)
    R2 = rot_y(-theta)
    omega0 = s[9:12]
    omega1 = R1.T @ omega0 + np.array([0.0, 0.0, sz * dpsi])
    omega2 = R2.T @ omega1 + np.array([0.0, -dtheta, 0.0])
    return R1, R2, omega1, omega2


def world_momentum(eng, s):
    """Total linear momentum of the five-body system, world frame."""
    v0 = s[6:9]
    omega0 = s[9:12]
    p = eng.m_torso * v0
    for k in range(2):
        R1, R2, omega1, omega2 = _frames(eng, s, k)
        v_sh = v0 + np.cross(omega0, eng.r_shoulder[k])
        v_le = v_sh + R1 @ np.cross(omega1, eng.c_le[k])
        v_wing = v_sh + R1 @ (R2 @ np.cross(omega2, eng.c_wing[k]))
        p = p + eng.m_le * v_le + eng.m_wing * v_wing
    R_wb = body_rotation(s[3], s[4], s[5])
    return R_wb @ p


def system_com(eng, s):
    """World-frame center of mass of torso + leading edges + wings."""
    c = np.zeros(3)
    for k in range(2):
        R1, R2, _, _ = _frames(eng, s, k)
        r_le = eng.r_shoulder[k] + R1 @ eng.c_le[k]
        r_wing = eng.r_shoulder[k] + R1 @ (R2 @ eng.c_wing[k])
        c = c + eng.m_le * r_le + eng.m_wing * r_wing
    R_wb = body_rotation(s[3], s[4], s[5])
    return s[0:3] + R_wb @ (c / eng.m_total)


def mechanical_energy(eng, s):
    """Kinetic energy from the full mass matrix plus stroke-spring energy."""
    M = eng.mass_matrix(s)
    nu = np.concatenate([s[6:12], s[16:20]])
    e = 0.5 * nu @ M @ nu
    for k, a in enumerate(eng.act):
        d = s[12 + 2 * k] - a.psi0
        e += 0.5 * (a.K_s_pos if d >= 0.0 else a.K_s_neg) * d * d
    return e


def reference_engine(params, **kwargs):
    """Pure-Python engine used for oracle evaluation (mass matrix etc.)."""
    return make_engine(params, "python", **kwargs)
