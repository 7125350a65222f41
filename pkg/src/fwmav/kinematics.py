"""Coordinate-frame transforms and wing-velocity decomposition.

The body frame is x forward, y left, z up, attitude parameterized by ZYX
Euler angles (yaw-pitch-roll). Each wing hangs off a shoulder at
(0, +/-d_0, d_s) from the CoM. The leading-edge frame is reached by rotating
about -y by the stroke-plane offset Phi, then about z by the stroke angle
psi, then about x by the deviation angle phi; the right side is the exact
mirror image about the body x-z plane, so positive psi sweeps both wingtips
forward. The left wing extends outboard along +y' of its leading-edge
frame, the right wing along -y'.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SIDES = ("left", "right")


def _side_sign(side):
    """Mirror sign of the stroke/rotation axes: -1 left, +1 right."""
    if side == "left":
        return -1.0
    if side == "right":
        return 1.0
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def body_rotation(roll, pitch, yaw):
    """World-from-body rotation for ZYX Euler angles."""
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def euler_rates(roll, pitch, p, q, r):
    """ZYX Euler-angle rates from body angular velocity."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, tp = math.cos(pitch), math.tan(pitch)
    droll = p + (q * sr + r * cr) * tp
    dpitch = q * cr - r * sr
    dyaw = (q * sr + r * cr) / cp
    return droll, dpitch, dyaw


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = math.fmod(a + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


@dataclass(frozen=True)
class WingDofs:
    """Wing degrees of freedom: stroke-plane offset, stroke, deviation,
    rotation, and their rates. Phi and phi are zero for the reference robot
    but kept for animal-model generality."""

    Phi: float = 0.0
    psi: float = 0.0
    phi: float = 0.0
    theta: float = 0.0
    dPhi: float = 0.0
    dpsi: float = 0.0
    dphi: float = 0.0
    dtheta: float = 0.0


@dataclass(frozen=True)
class VelocityCoeffs:
    """Linear-in-radius coefficients of the wing section velocity:
    in-plane u_i(r) = u_i1*r + u_i0, out-of-plane u_o(r) = u_o1*r + u_o0."""

    u_i1: float
    u_i0: float
    u_o1: float
    u_o0: float
    side: str


def leading_edge_rotation(dofs, side):
    """Rotation matrix from the leading-edge frame to the body frame."""
    s = _side_sign(side)
    return rot_y(-dofs.Phi) @ rot_z(s * dofs.psi) @ rot_x(s * dofs.phi)


def shoulder_offset(morph, side):
    # the shoulder sits outboard on its own side: +d_0 (left), -d_0 (right)
    s = _side_sign(side)
    return np.array([0.0, -s * morph.d_0, morph.d_s])


def shoulder_velocity(body, morph, side):
    """Shoulder-point velocity in the body frame: v + omega x r_shoulder."""
    v = np.array([body.u, body.v, body.w])
    omega = np.array([body.p, body.q, body.r])
    return v + np.cross(omega, shoulder_offset(morph, side))


def wing_frame_velocities(body, dofs, morph, side):
    """Leading-edge-frame linear and angular velocity (v', omega')."""
    s = _side_sign(side)
    R = leading_edge_rotation(dofs, side)
    v_prime = R.T @ shoulder_velocity(body, morph, side)
    omega_body = np.array([body.p, body.q - dofs.dPhi, body.r])
    sphi, cphi = math.sin(dofs.phi), math.cos(dofs.phi)
    omega_rel = np.array([s * dofs.dphi, dofs.dpsi * sphi, s * dofs.dpsi * cphi])
    return v_prime, R.T @ omega_body + omega_rel


def velocity_coefficients(v_prime, omega_prime, side):
    """Decompose leading-edge-frame velocities into the radius coefficients.

    For the left wing u_i1 = omega_z', u_i0 = v_x', u_o1 = omega_x',
    u_o0 = -v_z'; the right wing mirrors the angular terms so that
    positive stroke rate gives positive in-plane speed on both sides.
    """
    s = _side_sign(side)
    return VelocityCoeffs(
        u_i1=s * omega_prime[2], u_i0=v_prime[0],
        u_o1=s * omega_prime[0], u_o0=-v_prime[2], side=side)


def span_point_velocity(v_prime, omega_prime, r_w, side):
    """Velocity of the span point at radius r_w, leading-edge frame."""
    s = _side_sign(side)
    span = np.array([0.0, -s * r_w, 0.0])
    return np.asarray(v_prime) + np.cross(np.asarray(omega_prime), span)
