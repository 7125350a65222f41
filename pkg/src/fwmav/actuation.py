"""Wingbeat-modulation waveform, DC motor, torsion spring and joint stops."""

from __future__ import annotations

import math

from .params import ActuatorParams


def split_cycle(tau, delta_sigma):
    """Unit split-cycle sinusoid at phase tau in [0, 1).

    The first half-period is compressed to a fraction (1/2 - delta_sigma) of
    the cycle, the second stretched to (1/2 + delta_sigma); the stretched
    half is amplitude-scaled so the waveform stays exactly zero-mean.
    """
    d1 = 0.5 - delta_sigma
    d2 = 0.5 + delta_sigma
    if tau < d1:
        return math.sin(math.pi * tau / d1)
    return -(d1 / d2) * math.sin(math.pi * (tau - d1) / d2)


def waveform(cmd, t, f):
    """Per-motor voltages (V_l, V_r) at time t for a wingbeat-modulation
    command: V_k = A_k * s_k(t) + V_0 with A_l = V_amp - V_d, A_r = V_amp + V_d.

    The split-cycle parameter is applied differentially: the left wing gets
    s(t; +delta_sigma), the right s(t; -delta_sigma). With mirrored wings an
    identical split-cycle waveform on both sides cancels exactly by symmetry;
    opposing the up/downstroke timing asymmetry is what turns delta_sigma
    into a net yaw couple while keeping the fundamental (and hence thrust,
    roll and pitch) unchanged.
    """
    if abs(cmd.delta_sigma) >= 0.5:
        raise ValueError("|delta_sigma| must be < 0.5")
    tau = t * f - math.floor(t * f)
    s_l = split_cycle(tau, cmd.delta_sigma)
    s_r = split_cycle(tau, -cmd.delta_sigma)
    return ((cmd.V_amp - cmd.V_d) * s_l + cmd.V_0,
            (cmd.V_amp + cmd.V_d) * s_r + cmd.V_0)


def _side(act, side):
    return act.side(side) if isinstance(act, ActuatorParams) else act


def motor_torque(V, psi_dot, act, side="left"):
    """Quasi-static armature model with back-EMF through the gear ratio:
    tau = G*K_t*(V - G*K_t*psi_dot)/R_m."""
    a = _side(act, side)
    gkt = a.gear_ratio * a.K_t
    return gkt * (V - gkt * psi_dot) / a.R_m


def spring_torque(psi, act, side="left"):
    """Asymmetric torsion spring about the mid-stroke resting angle."""
    a = _side(act, side)
    d = psi - a.psi0
    return -(a.K_s_pos if d >= 0.0 else a.K_s_neg) * d


def stop_torque(x, x_dot, lo, hi, k, c):
    """Penalty spring-damper joint stop; damping only against outward motion."""
    if x > hi:
        tau = -k * (x - hi)
        if x_dot > 0.0:
            tau -= c * x_dot
        return tau
    if x < lo:
        tau = -k * (x - lo)
        if x_dot < 0.0:
            tau -= c * x_dot
        return tau
    return 0.0


def joint_stop_torque(theta, theta_dot, act, side="left"):
    """Wing-rotation joint-limit torque, zero inside (Theta-, Theta+)."""
    a = _side(act, side)
    return stop_torque(theta, theta_dot, a.Theta_neg, a.Theta_pos,
                       a.stop_stiffness, a.stop_damping)


def stroke_stop_torque(psi, psi_dot, act, side="left"):
    """Symmetric stroke joint-limit torque at +/- stroke_limit."""
    a = _side(act, side)
    return stop_torque(psi, psi_dot, -a.stroke_limit, a.stroke_limit,
                       a.stop_stiffness, a.stop_damping)
