"""Domain types and parameter sets for the flapping-wing vehicle simulator.

All quantities are SI (m, kg, s, rad, N, V). Types are plain dataclasses,
treated as immutable value objects after construction/validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

GRAVITY = 9.81


class ValidationError(ValueError):
    """A parameter set violates one of its invariants."""


class MissingFieldError(KeyError):
    """A required config field is absent."""


def _check(cond, msg):
    if not cond:
        raise ValidationError(msg)


def _spd(m, name):
    m = np.asarray(m, dtype=float)
    _check(m.shape == (3, 3), f"{name} must be 3x3")
    _check(np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, abs(m).max())),
           f"{name} must be symmetric")
    _check(np.all(np.linalg.eigvalsh(m) > 0), f"{name} must be positive definite")
    return m


@dataclass(frozen=True)
class Morphology:
    """Vehicle morphology: masses, geometry offsets, body inertia."""

    wingspan: float            # tip-to-tip span (m)
    mass_total: float          # total vehicle mass (kg)
    d_s: float                 # CoM-to-shoulder vertical distance (m)
    d_0: float                 # half shoulder width (m)
    body_inertia: np.ndarray   # 3x3 about CoM, body frame (kg m^2)
    wing_mass: float           # single wing membrane+spars (kg)
    leading_edge_mass: float   # single leading-edge frame (kg)
    wing_inertia_about_joint: float  # stroke-axis inertia of one wing about shoulder (kg m^2)

    def __post_init__(self):
        object.__setattr__(self, "body_inertia", _spd(self.body_inertia, "body_inertia"))
        for name in ("wingspan", "mass_total", "wing_mass", "leading_edge_mass",
                     "wing_inertia_about_joint"):
            _check(getattr(self, name) > 0, f"{name} must be > 0")
        _check(self.mass_total > 2 * (self.wing_mass + self.leading_edge_mass),
               "mass_total must exceed the mass of wings and leading edges")
        _check(self.d_0 >= 0 and self.d_s >= 0, "d_s and d_0 must be >= 0")

    @property
    def torso_mass(self):
        return self.mass_total - 2 * (self.wing_mass + self.leading_edge_mass)


@dataclass(frozen=True)
class WingShape:
    """Single-wing planform: span, mean chord and chord-distribution moments.

    ``chord_profile`` tabulates the normalized chord c_hat(r_hat) on a uniform
    grid over [0, 1] (both endpoints included); between stations the profile is
    piecewise linear. The dimensionless moments are integrals of that
    interpolant:

        r_hat_kk = integral c_hat * r_hat^k dr_hat      (k = 0..3)
        z_hat_cpk = integral c_hat^2 * r_hat^k dr_hat   (k = 0..2)
        z_hat_rd = integral c_hat^4 dr_hat
    """

    R_w: float                 # single wing length (m)
    c_bar: float               # mean chord (m)
    r_hat_00: float
    r_hat_11: float
    r_hat_22: float
    r_hat_33: float
    z_hat_cp0: float
    z_hat_cp1: float
    z_hat_cp2: float
    z_hat_rd: float
    chord_profile: np.ndarray  # c_hat at uniform stations over [0, 1]

    def __post_init__(self):
        prof = np.asarray(self.chord_profile, dtype=float)
        object.__setattr__(self, "chord_profile", prof)
        _check(self.R_w > 0 and self.c_bar > 0, "R_w and c_bar must be > 0")
        _check(prof.ndim == 1 and prof.size >= 3, "chord_profile needs >= 3 stations")
        _check(np.all(prof >= 0), "chord_profile must be nonnegative")
        _check(self.r_hat_00 > 0, "r_hat_00 must be > 0")
        moments = (self.r_hat_00, self.r_hat_11, self.r_hat_22, self.r_hat_33)
        _check(all(a > b for a, b in zip(moments, moments[1:])),
               "radius moments r_hat_kk must decrease with k")
        recomputed = chord_profile_moments(prof)
        for name, stored in zip(MOMENT_NAMES, recomputed):
            got = getattr(self, name)
            if abs(got - stored) > 1e-6:
                raise ValidationError(
                    f"stored {name}={got!r} disagrees with the chord profile "
                    f"(recomputed {stored!r}, tolerance 1e-6)")

    @property
    def area(self):
        return self.c_bar * self.R_w * self.r_hat_00

    @classmethod
    def from_profile(cls, R_w, c_bar, chord_profile):
        """Build a WingShape with all moments computed from the profile."""
        m = chord_profile_moments(np.asarray(chord_profile, dtype=float))
        return cls(R_w, c_bar, *m, chord_profile=chord_profile)


MOMENT_NAMES = ("r_hat_00", "r_hat_11", "r_hat_22", "r_hat_33",
                "z_hat_cp0", "z_hat_cp1", "z_hat_cp2", "z_hat_rd")


def chord_profile_moments(profile):
    """Exact moments of the piecewise-linear chord profile.

    Integrates c_hat^p * r_hat^k per segment with 5-point Gauss-Legendre,
    which is exact for the polynomial integrands involved (degree <= 7).
    Returns (r00, r11, r22, r33, z0, z1, z2, z_rd).
    """
    prof = np.asarray(profile, dtype=float)
    n = prof.size - 1
    # Gauss-Legendre nodes/weights on [0, 1]
    x, w = np.polynomial.legendre.leggauss(5)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    h = 1.0 / n
    left = np.arange(n) * h
    r = left[:, None] + h * x[None, :]                      # (n, 5)
    c = prof[:-1, None] + (prof[1:] - prof[:-1])[:, None] * x[None, :]
    seg = h * w[None, :]

    def integ(f):
        return float(np.sum(f * seg))

    return (integ(c), integ(c * r), integ(c * r**2), integ(c * r**3),
            integ(c**2), integ(c**2 * r), integ(c**2 * r**2), integ(c**4))


def chord_cubed_moment(profile):
    """integral c_hat^3 dr_hat of the piecewise-linear profile (used for the
    plate inertia of the wing, not part of the aerodynamic moment set)."""
    prof = np.asarray(profile, dtype=float)
    n = prof.size - 1
    x, w = np.polynomial.legendre.leggauss(5)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    c = prof[:-1, None] + (prof[1:] - prof[:-1])[:, None] * x[None, :]
    return float(np.sum(c**3 * (w / n)[None, :]))


@dataclass(frozen=True)
class AeroParams:
    """Air density and the configurable force-coefficient laws.

    ``cn_coeffs``: coefficients of the normal-force law
        C_N(alpha) = sum_k cn_coeffs[k] * sin((k+1) * alpha)
    (odd and 2*pi periodic by construction).

    ``dcp_coeffs``: cosine series for the chord-wise center of pressure
        d_hat_cp(alpha) = dcp_coeffs[0] + sum_{k>=1} dcp_coeffs[k] * cos(k * alpha)
    clamped to [0, 1] (even, 2*pi periodic).
    """

    rho_A: float
    C_rd: float
    cn_coeffs: tuple
    dcp_coeffs: tuple

    def __post_init__(self):
        object.__setattr__(self, "cn_coeffs", tuple(float(c) for c in self.cn_coeffs))
        object.__setattr__(self, "dcp_coeffs", tuple(float(c) for c in self.dcp_coeffs))
        _check(self.rho_A > 0, "rho_A must be > 0")
        _check(self.C_rd > 0, "C_rd must be > 0")
        _check(len(self.cn_coeffs) >= 1, "cn_coeffs must not be empty")
        _check(len(self.dcp_coeffs) >= 1, "dcp_coeffs must not be empty")
        # d_hat_cp in [0, 1] pre-clamp, checked densely over one period
        a = np.linspace(-math.pi, math.pi, 721)
        d = self.dcp_coeffs[0] + sum(
            c * np.cos(k * a) for k, c in enumerate(self.dcp_coeffs[1:], start=1))
        _check(np.all(d >= 0.0) and np.all(d <= 1.0),
               "d_hat_cp(alpha) must lie in [0, 1] for all alpha")


@dataclass(frozen=True)
class SideActuator:
    """Motor, torsion spring and joint-limit parameters for one side."""

    R_m: float          # motor resistance (ohm)
    K_t: float          # torque constant (N m / A)
    gear_ratio: float   # transmission ratio, 1 = direct drive
    K_s_pos: float      # spring stiffness, psi >= psi0 (N m / rad)
    K_s_neg: float      # spring stiffness, psi < psi0 (N m / rad)
    psi0: float         # mid-stroke resting angle (rad)
    Theta_pos: float    # wing rotation upper limit (rad)
    Theta_neg: float    # wing rotation lower limit (rad)
    stop_stiffness: float   # joint-limit penalty stiffness (N m / rad)
    stop_damping: float     # joint-limit penalty damping (N m s / rad)
    stroke_limit: float     # symmetric stroke joint limit (rad)

    def __post_init__(self):
        _check(self.R_m > 0, "R_m must be > 0")
        _check(self.K_t > 0, "K_t must be > 0")
        _check(self.gear_ratio > 0, "gear_ratio must be > 0")
        _check(self.K_s_pos > 0 and self.K_s_neg > 0, "spring stiffnesses must be > 0")
        _check(self.Theta_neg < 0 < self.Theta_pos,
               "rotation limits must satisfy Theta_neg < 0 < Theta_pos")
        _check(self.stop_stiffness > 0 and self.stop_damping >= 0,
               "stop parameters must be positive")
        _check(self.stroke_limit > 0, "stroke_limit must be > 0")


@dataclass(frozen=True)
class ActuatorParams:
    left: SideActuator
    right: SideActuator
    supply_voltage: float   # |V| clamp (V)

    def __post_init__(self):
        _check(self.supply_voltage > 0, "supply_voltage must be > 0")

    def side(self, which):
        if which == "left":
            return self.left
        if which == "right":
            return self.right
        raise ValueError(f"side must be 'left' or 'right', got {which!r}")


@dataclass(frozen=True)
class VehicleParams:
    """Full physical description of one simulated vehicle."""

    morphology: Morphology
    wing: WingShape
    aero: AeroParams
    actuator: ActuatorParams
    flap_frequency: float   # nominal wingbeat frequency (Hz)

    def __post_init__(self):
        _check(self.flap_frequency > 0, "flap_frequency must be > 0")

    def with_sysid_vector(self, x):
        """Return a copy with the 12 identification parameters replaced.

        Order: R_m_l, R_m_r, K_s_l+, K_s_l-, K_s_r+, K_s_r-, psi0_l, psi0_r,
        Theta+_l, Theta-_l, Theta+_r, Theta-_r.
        """
        x = [float(v) for v in x]
        if len(x) != 12:
            raise ValueError("sysid vector must have 12 entries")
        left = replace(self.actuator.left, R_m=x[0], K_s_pos=x[2], K_s_neg=x[3],
                       psi0=x[6], Theta_pos=x[8], Theta_neg=x[9])
        right = replace(self.actuator.right, R_m=x[1], K_s_pos=x[4], K_s_neg=x[5],
                        psi0=x[7], Theta_pos=x[10], Theta_neg=x[11])
        return replace(self, actuator=replace(self.actuator, left=left, right=right))

    def sysid_vector(self):
        l, r = self.actuator.left, self.actuator.right
        return np.array([l.R_m, r.R_m, l.K_s_pos, l.K_s_neg, r.K_s_pos, r.K_s_neg,
                         l.psi0, r.psi0, l.Theta_pos, l.Theta_neg,
                         r.Theta_pos, r.Theta_neg])


SYSID_PARAM_NAMES = (
    "R_m_l", "R_m_r", "K_s_pos_l", "K_s_neg_l", "K_s_pos_r", "K_s_neg_r",
    "psi0_l", "psi0_r", "Theta_pos_l", "Theta_neg_l", "Theta_pos_r", "Theta_neg_r")


@dataclass
class SimState:
    """Generalized state of the 10-DOF vehicle plus the simulation clock.

    Body position is world-frame, attitude is ZYX (yaw-pitch-roll) Euler
    angles, linear/angular velocities are body-frame. Wing angles are per-side
    stroke psi and rotation theta with their rates.
    """

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0
    u: float = 0.0
    v: float = 0.0
    w: float = 0.0
    p: float = 0.0
    q: float = 0.0
    r: float = 0.0
    psi_l: float = 0.0
    theta_l: float = 0.0
    psi_r: float = 0.0
    theta_r: float = 0.0
    dpsi_l: float = 0.0
    dtheta_l: float = 0.0
    dpsi_r: float = 0.0
    dtheta_r: float = 0.0
    t: float = 0.0

    FIELDS = ("x", "y", "z", "roll", "pitch", "yaw", "u", "v", "w", "p", "q", "r",
              "psi_l", "theta_l", "psi_r", "theta_r",
              "dpsi_l", "dtheta_l", "dpsi_r", "dtheta_r", "t")

    def to_array(self):
        return np.array([getattr(self, f) for f in self.FIELDS], dtype=float)

    @classmethod
    def from_array(cls, a):
        a = np.asarray(a, dtype=float)
        if a.shape != (21,):
            raise ValueError("state array must have 21 entries")
        return cls(**dict(zip(cls.FIELDS, (float(v) for v in a))))

    def copy(self):
        return replace(self)

    def is_finite(self):
        return all(math.isfinite(getattr(self, f)) for f in self.FIELDS)


@dataclass(frozen=True)
class ControlInput:
    """Wingbeat-modulation command (V_amp, V_d, V_0, delta_sigma)."""

    V_amp: float = 0.0
    V_d: float = 0.0
    V_0: float = 0.0
    delta_sigma: float = 0.0

    def validate(self, supply_voltage):
        _check(abs(self.delta_sigma) < 0.5, "|delta_sigma| must be < 0.5")
        _check(abs(self.V_amp) + abs(self.V_d) + abs(self.V_0) <= supply_voltage,
               "|V_amp| + |V_d| + |V_0| exceeds the supply voltage")
        return self

    def to_array(self):
        return np.array([self.V_amp, self.V_d, self.V_0, self.delta_sigma])


@dataclass(frozen=True)
class AeroLoad:
    """Instantaneous quasi-steady loads on one wing.

    F_N is the signed normal force along the wing-frame x axis, M_aero the
    aerodynamic pitching moment and M_rd the rotational damping moment about
    the wing-frame y axis. r_cp/d_cp locate the application point. When |F_N|
    falls below the couple threshold, d_cp is zeroed and M_aero must be
    applied as a pure couple (``couple`` flag).
    """

    F_N: float
    M_aero: float
    M_rd: float
    r_cp: float
    d_cp: float
    couple: bool = False

    def to_tuple(self):
        return (self.F_N, self.M_aero, self.M_rd, self.r_cp, self.d_cp)


@dataclass(frozen=True)
class Wrench6:
    """Cycle-averaged body force/torque about the CoM, body frame."""

    Fx: float
    Fy: float
    Fz: float
    Mx: float
    My: float
    Mz: float

    def to_array(self):
        return np.array([self.Fx, self.Fy, self.Fz, self.Mx, self.My, self.Mz])

    @classmethod
    def from_array(cls, a):
        return cls(*(float(v) for v in a))
