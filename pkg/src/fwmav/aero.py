"""Instantaneous quasi-steady blade-element loads.

Closed-form spanwise integrals using the chord-distribution radius moments;
signs follow the convention that the wing-frame x axis is the outward normal
on the suction side, so sgn(F_N) = sgn(alpha) and M_rd opposes the rotation
rate. The force a wing exerts is applied at the span-wise / chord-wise center
of pressure (r_cp, d_cp).
"""

from __future__ import annotations

import math

import numpy as np

from .kinematics import (_side_sign, leading_edge_rotation, shoulder_offset,
                         wrap_angle)
from .params import AeroLoad

COUPLE_FORCE_EPS = 1e-9     # |F_N| below this: d_cp -> 0, M_aero as a couple
INPLANE_SPEED_EPS = 1e-9    # |u_i(r_cp)| below this: degenerate AoA handling


def r_cp_spanwise(wing):
    """Span-wise center of pressure r_cp = R_w * r33 / r22."""
    return wing.R_w * wing.r_hat_33 / wing.r_hat_22


def angle_of_attack(theta, c, r_cp, last_sign=1.0):
    """Angle of attack at the span-wise center of pressure, in (-pi, pi].

    When the in-plane speed at r_cp vanishes the branch sign of the +/-pi/2
    term is taken from ``last_sign`` (the sign of the last nonzero in-plane
    speed) and the flow angle falls back to the two-argument arctangent.
    """
    u_i = c.u_i1 * r_cp + c.u_i0
    u_o = c.u_o1 * r_cp + c.u_o0
    if abs(u_i) >= INPLANE_SPEED_EPS:
        sgn = 1.0 if u_i > 0.0 else -1.0
        alpha = theta + sgn * 0.5 * math.pi - math.atan(u_o / u_i)
    else:
        sgn = 1.0 if last_sign >= 0.0 else -1.0
        alpha = theta + sgn * 0.5 * math.pi - math.atan2(u_o, u_i)
    return wrap_angle(alpha), sgn


def normal_coefficient(alpha, aero):
    """Normal force coefficient C_N(alpha): odd sine series."""
    return sum(a * math.sin((k + 1) * alpha)
               for k, a in enumerate(aero.cn_coeffs))


def dcp_chordwise(alpha, aero):
    """Chord-wise center of pressure fraction, 2*pi-periodic, in [0, 1]."""
    d = aero.dcp_coeffs[0] + sum(
        c * math.cos(k * alpha) for k, c in enumerate(aero.dcp_coeffs[1:], start=1))
    return min(1.0, max(0.0, d))


def velocity_squared_coeffs(c):
    """Quadratic-in-radius coefficients of u(r)^2 = u_i^2 + u_o^2."""
    a_u2 = c.u_i1**2 + c.u_o1**2
    a_u1 = 2.0 * (c.u_i1 * c.u_i0 + c.u_o1 * c.u_o0)
    a_u0 = c.u_i0**2 + c.u_o0**2
    return a_u2, a_u1, a_u0


def blade_element_loads(alpha, a_u, theta_dot, wing, aero):
    """Integrated normal force, pitching moment and rotational damping."""
    a_u2, a_u1, a_u0 = a_u
    R = wing.R_w
    cb = wing.c_bar
    vel2 = a_u2 * R**3 * wing.r_hat_22 + a_u1 * R**2 * wing.r_hat_11 \
        + a_u0 * R * wing.r_hat_00
    vel2_cp = a_u2 * R**3 * wing.z_hat_cp2 + a_u1 * R**2 * wing.z_hat_cp1 \
        + a_u0 * R * wing.z_hat_cp0
    cn = normal_coefficient(alpha, aero)
    F_N = 0.5 * aero.rho_A * cn * cb * vel2
    M_aero = -0.5 * aero.rho_A * dcp_chordwise(alpha, aero) * cn * cb**2 * vel2_cp
    M_rd = -0.125 * aero.rho_A * abs(theta_dot) * theta_dot \
        * aero.C_rd * R * cb**4 * wing.z_hat_rd
    couple = abs(F_N) < COUPLE_FORCE_EPS
    d_cp = 0.0 if couple else -M_aero / F_N
    return AeroLoad(F_N=F_N, M_aero=M_aero, M_rd=M_rd,
                    r_cp=r_cp_spanwise(wing), d_cp=d_cp, couple=couple)


def wing_loads(body_or_none, theta, theta_dot, coeffs, wing, aero, last_sign=1.0):
    """AoA + loads for one wing from its velocity coefficients."""
    alpha, sgn = angle_of_attack(theta, coeffs, r_cp_spanwise(wing), last_sign)
    return blade_element_loads(alpha, velocity_squared_coeffs(coeffs),
                               theta_dot, wing, aero), alpha, sgn


def load_vectors_le_frame(load, theta, side):
    """Force, application point and couple of an AeroLoad, leading-edge frame.

    Returns (f, p, n): the aerodynamic force vector, its application point
    relative to the shoulder, and the pure-couple part (rotational damping,
    plus M_aero when the force is below the couple threshold).
    """
    s = _side_sign(side)
    st, ct = math.sin(theta), math.cos(theta)
    f = np.array([-load.F_N * ct, 0.0, -load.F_N * st])
    chord = np.array([st, 0.0, -ct])
    p = np.array([0.0, -s * load.r_cp, 0.0]) + load.d_cp * chord
    n_axis = load.M_rd + (load.M_aero if load.couple else 0.0)
    n = np.array([0.0, -n_axis, 0.0])
    return f, p, n


def wrench_on_body(load, dofs, morph, side):
    """Transform one wing's loads to a (force, torque-about-CoM) pair in the
    body frame."""
    f, p, n = load_vectors_le_frame(load, dofs.theta, side)
    R = leading_edge_rotation(dofs, side)
    F_b = R @ f
    M_shoulder = R @ (np.cross(p, f) + n)
    M_com = M_shoulder + np.cross(shoulder_offset(morph, side), F_b)
    return F_b, M_com
