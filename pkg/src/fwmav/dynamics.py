"""Equations of motion and fixed-step time integration of the articulated
vehicle (10 kHz by default)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _engine_py as L
from .actuation import waveform
from .engine import cached_engine
from .params import ControlInput, SimState
from .trajlog import TrajectoryLog

DEFAULT_DT = 1.0e-4

IntegrationDivergedError = L.IntegrationDivergedError


@dataclass
class GeneralizedState:
    """Generalized coordinates and quasi-velocities of the 10-DOF system.

    q = [x, y, z, roll, pitch, yaw, psi_l, theta_l, psi_r, theta_r];
    qdot = [u, v, w, p, q, r, dpsi_l, dtheta_l, dpsi_r, dtheta_r] with the
    base block expressed as the body-frame twist.
    """

    q: np.ndarray
    qdot: np.ndarray

    @classmethod
    def from_sim_state(cls, s):
        a = s.to_array()
        q = np.concatenate([a[0:6], a[12:16]])
        qdot = np.concatenate([a[6:12], a[16:20]])
        return cls(q=q, qdot=qdot)

    def to_sim_state(self, t=0.0):
        a = np.concatenate([self.q[0:6], self.qdot[0:6],
                            self.q[6:10], self.qdot[6:10], [t]])
        return SimState.from_array(a)


def _state_array(gs):
    a = np.zeros(L.STATE_DIM)
    a[0:6] = gs.q[0:6]
    a[6:12] = gs.qdot[0:6]
    a[12:16] = gs.q[6:10]
    a[16:20] = gs.qdot[6:10]
    return a


def forward_dynamics(state, joint_torques, aero_wrenches, params, backend=None):
    """Generalized accelerations under joint torques and external wing
    wrenches.

    ``aero_wrenches`` is None or a per-wing pair of (force, point, couple)
    triples expressed in each wing's own frame with the shoulder as origin.
    """
    eng = cached_engine(params, backend)
    s = _state_array(state)
    tau = np.asarray(joint_torques, dtype=float)
    if tau.shape != (4,):
        raise ValueError("joint_torques must have 4 entries")
    ext = None
    if aero_wrenches is not None:
        ext = tuple(
            None if w is None else tuple(np.asarray(v, dtype=float) for v in w)
            for w in aero_wrenches)
    nudot = eng.accel(s, tau, ext)
    if not np.all(np.isfinite(nudot)):
        raise FloatingPointError(
            f"forward dynamics produced non-finite accelerations; state={s}")
    return nudot


def step(state, cmd, params, dt=DEFAULT_DT, engine=None):
    """Advance one physics step: waveform -> torques -> aero -> forward
    dynamics -> semi-implicit Euler. Deterministic given inputs."""
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    eng = engine if engine is not None else cached_engine(params)
    V_l, V_r = waveform(cmd, state.t, params.flap_frequency)
    out, _, _, _ = eng.step_free(state.to_array(), V_l, V_r, dt)
    return SimState.from_array(out)


def simulate(initial, input_source, duration, params, dt=DEFAULT_DT,
             log=None, backend=None, clamped=False):
    """Fixed-step rollout with logging.

    ``input_source`` is a ControlInput held constant, or a callable
    (t, SimState) -> ControlInput evaluated every step. Returns the
    TrajectoryLog (a fresh one unless ``log`` is given).
    """
    if duration <= 0.0:
        raise ValueError("duration must be > 0")
    eng = cached_engine(params, backend)
    eng.reset_aero_state()
    if log is None:
        log = TrajectoryLog()
    n_steps = int(round(duration / dt))
    s = initial.to_array()
    f = params.flap_frequency
    fixed_cmd = input_source if isinstance(input_source, ControlInput) else None
    stepper = eng.step_clamped if clamped else eng.step_free
    for _ in range(n_steps):
        cmd = fixed_cmd if fixed_cmd is not None \
            else input_source(s[L.IT], SimState.from_array(s))
        V_l, V_r = waveform(cmd, s[L.IT], f)
        s, load_l, load_r, _ = stepper(s, V_l, V_r, dt)
        log.append(s[L.IT], SimState.from_array(s), cmd, (load_l, load_r))
    return log


def hover_state(params, t=0.0, **overrides):
    """Rest state with wings at their spring resting angles."""
    s = SimState(t=t,
                 psi_l=params.actuator.left.psi0,
                 psi_r=params.actuator.right.psi0)
    for k, v in overrides.items():
        setattr(s, k, v)
    return s


def stroke_inertia(params, side="left"):
    """Inertia of one leading-edge + hanging wing about the stroke axis."""
    m = params.morphology
    w = params.wing
    eng = cached_engine(params)
    k = 0 if side == "left" else 1
    I_le = m.leading_edge_mass * w.R_w**2 / 3.0
    c = eng.c_wing[k]
    I_w = eng.I_wing[k][2, 2] + m.wing_mass * (c[0]**2 + c[1]**2)
    return I_le + I_w


def resonant_frequency(params, side="left"):
    """Small-signal stroke resonance (1/2pi) sqrt(K_s / I_stroke)."""
    act = params.actuator.side(side)
    K = 0.5 * (act.K_s_pos + act.K_s_neg)
    return math.sqrt(K / stroke_inertia(params, side)) / (2.0 * math.pi)
