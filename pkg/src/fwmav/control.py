"""Sensor fusion and the cascade hover/position controller (500 Hz).

Fusion is a first-order complementary filter: attitude integrates the gyro
and is pulled toward mocap attitude at the configured crossover; position
comes from mocap with finite-difference velocity smoothing. The controller
cascades position P -> velocity PD -> attitude PID, with thrust on V_amp,
roll on V_d, pitch on V_0 and yaw on the split-cycle parameter.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from .actuation import waveform
from .engine import make_engine
from .kinematics import wrap_angle
from .params import GRAVITY, ControlInput
from .sensors import IMU_RATE, SensorConfig, SensorSuite
from .sysid import cycle_averaged_wrench
from .trajlog import TrajectoryLog
from .dynamics import DEFAULT_DT, hover_state
from .params import SimState

CONTROL_RATE = IMU_RATE  # controller ticks on the IMU grid
MOCAP_STARVATION = 0.5   # s without mocap -> estimator degraded


class TrimError(RuntimeError):
    """No hover trim within the actuator voltage limits."""


# ---------------------------------------------------------------------------
# estimation
# ---------------------------------------------------------------------------

@dataclass
class EstimatorConfig:
    crossover_hz: float = 5.0     # complementary-filter crossover
    vel_smooth: float = 0.6       # blend factor for FD mocap velocity
    rate_lpf_hz: float = 50.0     # light gyro smoothing in the estimate


class Estimator:
    """Complementary-filter attitude + mocap position/velocity at 500 Hz.

    Estimate layout (12): position xyz (world), Euler roll/pitch/yaw,
    velocity xyz (world), body rates pqr (low-passed gyro).
    """

    def __init__(self, cfg=None, initial_state=None):
        self.cfg = cfg or EstimatorConfig()
        self.att = np.zeros(3)
        self.pos = np.zeros(3)
        self.vel = np.zeros(3)
        self.rates = np.zeros(3)
        self._raw_rates = np.zeros(3)
        self._last_imu_t = None
        self._last_mocap = None  # (t, position)
        self._t = 0.0
        self.degraded = False
        if initial_state is not None:
            s = initial_state
            self.att = np.array([s.roll, s.pitch, s.yaw])
            self.pos = np.array([s.x, s.y, s.z])
            self._last_mocap = (s.t, self.pos.copy())
            self._last_imu_t = s.t
            self._t = s.t

    def update_imu(self, sample):
        dt = 1.0 / IMU_RATE if self._last_imu_t is None \
            else sample.timestamp - self._last_imu_t
        self._last_imu_t = sample.timestamp
        self._t = max(self._t, sample.timestamp)
        g = np.asarray(sample.gyro)
        self._raw_rates = g
        a = min(1.0, 2.0 * math.pi * self.cfg.rate_lpf_hz * dt)
        self.rates = self.rates + a * (g - self.rates)
        roll, pitch = self.att[0], self.att[1]
        sr, cr = math.sin(roll), math.cos(roll)
        cp = math.cos(pitch)
        tp = math.tan(pitch)
        # ZYX Euler kinematics from body rates
        self.att = self.att + dt * np.array([
            g[0] + (g[1] * sr + g[2] * cr) * tp,
            g[1] * cr - g[2] * sr,
            (g[1] * sr + g[2] * cr) / cp,
        ])

    def update_mocap(self, sample):
        t = sample.timestamp
        self._t = max(self._t, t)
        tau = 1.0 / (2.0 * math.pi * self.cfg.crossover_hz)
        if self._last_mocap is not None:
            dt = t - self._last_mocap[0]
            if dt > 0.0:
                lam = dt / (dt + tau)
                err = np.array([wrap_angle(e) for e in
                                np.asarray(sample.orientation) - self.att])
                self.att = self.att + lam * err
                v_new = (np.asarray(sample.position)
                         - self._last_mocap[1]) / dt
                b = self.cfg.vel_smooth
                self.vel = (1.0 - b) * self.vel + b * v_new
        else:
            self.att = np.asarray(sample.orientation, dtype=float).copy()
        self.pos = np.asarray(sample.position, dtype=float).copy()
        self._last_mocap = (t, self.pos.copy())

    def estimate(self, t=None):
        """Current 12-vector estimate; sets ``degraded`` on mocap starvation."""
        t = self._t if t is None else t
        self.degraded = (self._last_mocap is None
                         or t - self._last_mocap[0] > MOCAP_STARVATION)
        return np.concatenate([self.pos, self.att, self.vel, self.rates])


def fuse(imu_stream, mocap_stream, cfg=None):
    """Offline fusion of time-ordered sample streams -> estimates on the
    IMU grid. Convenience wrapper over Estimator for batch use."""
    est = Estimator(cfg)
    mocap = list(mocap_stream)
    mi = 0
    out = []
    for s in imu_stream:
        while mi < len(mocap) and mocap[mi].timestamp <= s.timestamp:
            est.update_mocap(mocap[mi])
            mi += 1
        est.update_imu(s)
        out.append(est.estimate(s.timestamp))
    return np.array(out)


# ---------------------------------------------------------------------------
# cascade controller
# ---------------------------------------------------------------------------

@dataclass
class ControllerGains:
    """Shipped defaults; tuned in simulation against the reference vehicle.

    Pitch maps directly to V_0; roll and yaw demands are allocated to
    (V_d, dsig) through the inverse of lat_mix, which with the shipped
    values routes roll to the split-cycle asymmetry dsig and yaw to the
    amplitude asymmetry V_d. The optional V_d rate servo (yaw_vd_*) is
    shipped disabled because sustained yaw authority is far below the
    chaotic wing-stop yaw disturbance on this plant, and a strong servo
    destabilizes the roll axis it couples into.
    """

    pos_p: float = 2.0            # m/s per m
    vel_max: float = 1.0          # m/s setpoint clamp
    vel_p: float = 4.0            # m/s^2 per m/s
    acc_max: float = 2.5          # m/s^2 clamp
    tilt_max: float = math.radians(10.0)
    z_accel_to_volts: float = 0.38  # V per m/s^2 (inverse thrust slope/mass)
    z_int: float = 0.5            # V per m*s of z error
    z_int_max: float = 2.0        # V integrator clamp
    # roll commands an angular acceleration (rad/s^2 per rad of error)
    # mapped to (V_d, dsig) through lat_mix; pitch maps directly to V_0
    att_p: tuple = (240.0, -2.4, 64.0)
    att_d: tuple = (35.0, -0.33, 12.8)
    att_i: tuple = (40.0, -1.0, 20.0)
    att_int_max: tuple = (0.3, 1.0, 0.3)
    lat_acc_max: float = 300.0    # rad/s^2 clamp on the roll/yaw demand
    # effective free-flight (roll_acc, yaw_acc) response per unit (V_d, dsig).
    # Roll is allocated to dsig alone and yaw to V_d alone: the V_d-to-roll
    # channel reverses sign between the cycle-averaged torque and the early
    # free-flight response (wing-reaction non-minimum phase) and closed-loop
    # roll through V_d diverges with either sign, while dsig gives a clean
    # negative roll gain and V_d a clean negative yaw gain.
    lat_mix: tuple = ((0.0, -2500.0), (-130.0, 0.0))
    # optional yaw rate servo on V_d: angle error -> rate setpoint -> V_d
    # offset; disabled by default (see class docstring)
    yaw_rate_p: float = 0.0       # rad/s of rate per rad of yaw error
    yaw_rate_max: float = 1.0     # rad/s setpoint clamp
    yaw_vd_p: float = 0.0         # V per rad/s of rate error (+V_d -> +r)
    yaw_vd_i: float = 0.0         # V per rad of integrated rate error
    yaw_vd_max: float = 1.5       # V budget for the yaw servo
    v_d_max: float = 2.0
    v_0_max: float = 2.0
    dsig_max: float = 0.15
    ripple_avg_n: int = 15        # attitude/rate comb filter: one-wingbeat
                                  # moving average (500 Hz / 34 Hz) cancels
                                  # flapping ripple with ~15 ms lag
    z_int_window: float = 0.25    # integrate z only within this error band
    v_amp_min: float = 2.0
    v_amp_max: float = 14.0

    @classmethod
    def from_dict(cls, d):
        kw = {}
        for f_ in cls.__dataclass_fields__:
            if f_ in d:
                v = d[f_]
                kw[f_] = tuple(v) if isinstance(v, (list, tuple)) else v
        return cls(**kw)


@dataclass(frozen=True)
class Setpoint:
    position: tuple = (0.0, 0.0, 0.0)
    yaw: float = 0.0


class CascadeController:
    """Position/velocity/attitude cascade producing ControlInput at 500 Hz."""

    def __init__(self, gains=None, trim=None, supply_voltage=16.0):
        self.gains = gains or ControllerGains()
        self.trim = trim or ControlInput()
        self.supply = supply_voltage
        self.z_i = 0.0
        self.yaw_i = 0.0
        self.att_i = np.zeros(3)
        self._att_buf = deque(maxlen=self.gains.ripple_avg_n)
        self._rate_buf = deque(maxlen=self.gains.ripple_avg_n)
        self.saturated = False

    def reset(self):
        self.z_i = 0.0
        self.yaw_i = 0.0
        self.att_i[:] = 0.0
        self._att_buf.clear()
        self._rate_buf.clear()
        self.saturated = False

    def control_step(self, estimate, setpoint, dt=1.0 / CONTROL_RATE):
        """One controller tick from a 12-vector estimate."""
        g = self.gains
        est = np.asarray(estimate, dtype=float)
        pos, att, vel = est[0:3], est[3:6], est[6:9]
        # one-wingbeat moving average strips the flapping ripple from the
        # attitude-loop feedback (angles handled through the wrapped offset
        # from the newest sample so averaging never crosses the +-pi seam)
        self._att_buf.append(np.array([wrap_angle(a - att[i])
                                       for i, a in enumerate(att)]))
        self._rate_buf.append(est[9:12].copy())
        att_fb = att + np.mean(self._att_buf, axis=0)
        rates = np.mean(self._rate_buf, axis=0)
        p_ref = np.asarray(setpoint.position, dtype=float)

        # outer position loop -> velocity setpoint
        v_sp = np.clip(g.pos_p * (p_ref - pos), -g.vel_max, g.vel_max)
        # velocity loop -> world acceleration command
        a_cmd = np.clip(g.vel_p * (v_sp - vel), -g.acc_max, g.acc_max)

        # horizontal acceleration -> tilt targets (yaw-decoupled)
        yaw = att[2]
        cy, sy = math.cos(yaw), math.sin(yaw)
        pitch_cmd = (a_cmd[0] * cy + a_cmd[1] * sy) / GRAVITY
        roll_cmd = (a_cmd[0] * sy - a_cmd[1] * cy) / GRAVITY
        pitch_cmd = max(-g.tilt_max, min(g.tilt_max, pitch_cmd))
        roll_cmd = max(-g.tilt_max, min(g.tilt_max, roll_cmd))

        # vertical channel -> V_amp
        z_err = p_ref[2] - pos[2]
        v_amp_raw = (self.trim.V_amp + g.z_accel_to_volts * a_cmd[2]
                     + g.z_int * self.z_i)
        v_amp = max(g.v_amp_min, min(g.v_amp_max, v_amp_raw))
        # anti-windup: integrate only when unsaturated; far errors count as
        # the window edge so the integrator cannot wind faster than that
        if v_amp == v_amp_raw:
            self.z_i += max(-g.z_int_window,
                            min(g.z_int_window, z_err)) * dt
        self.z_i = max(-g.z_int_max / max(g.z_int, 1e-9),
                       min(g.z_int_max / max(g.z_int, 1e-9), self.z_i))

        # attitude loop: roll/yaw as angular-acceleration demands, pitch in V
        err = np.array([wrap_angle(roll_cmd - att_fb[0]),
                        wrap_angle(pitch_cmd - att_fb[1]),
                        wrap_angle(setpoint.yaw - att_fb[2])])
        kp, kd, ki = np.asarray(g.att_p), np.asarray(g.att_d), np.asarray(g.att_i)
        u = kp * err - kd * rates + ki * self.att_i
        lat = np.clip(u[[0, 2]], -g.lat_acc_max, g.lat_acc_max)
        v_d_raw, dsig_raw = np.linalg.solve(np.asarray(g.lat_mix), lat)
        v_d = max(-g.v_d_max, min(g.v_d_max, v_d_raw))
        dsig = max(-g.dsig_max, min(g.dsig_max, dsig_raw))
        v_0 = max(-g.v_0_max, min(g.v_0_max, u[1]))

        # yaw rate servo on V_d (amplitude-asymmetry drag is the only input
        # with usable low-frequency yaw authority; +V_d -> +yaw rate)
        r_des = max(-g.yaw_rate_max,
                    min(g.yaw_rate_max, g.yaw_rate_p * err[2]))
        e_r = r_des - rates[2]
        v_d_yaw_raw = g.yaw_vd_p * e_r + g.yaw_vd_i * self.yaw_i
        v_d_yaw = max(-g.yaw_vd_max, min(g.yaw_vd_max, v_d_yaw_raw))
        if v_d_yaw == v_d_yaw_raw:
            self.yaw_i += e_r * dt
        i_lim = g.yaw_vd_max / max(g.yaw_vd_i, 1e-9)
        self.yaw_i = max(-i_lim, min(i_lim, self.yaw_i))

        lat_free = (abs(v_d - v_d_raw) < 1e-12 and abs(dsig - dsig_raw) < 1e-12
                    and np.all(np.abs(lat - u[[0, 2]]) < 1e-9))
        free = np.array([lat_free, abs(v_0 - u[1]) < 1e-12,
                         v_d_yaw == v_d_yaw_raw])
        self.att_i += np.where(free, err * dt, 0.0)
        np.clip(self.att_i, -np.asarray(g.att_int_max),
                np.asarray(g.att_int_max), out=self.att_i)

        self.saturated = bool(v_amp != v_amp_raw or not np.all(free))
        cmd = ControlInput(
            V_amp=float(v_amp),
            V_d=float(self.trim.V_d + v_d + v_d_yaw),
            V_0=float(self.trim.V_0 + v_0),
            delta_sigma=float(self.trim.delta_sigma + dsig))
        return clamp_command(cmd, self.supply)


def clamp_command(cmd, supply_voltage):
    """Clamp a command into the actuator-feasible box."""
    dsig = max(-0.49, min(0.49, cmd.delta_sigma))
    v_amp = max(0.0, cmd.V_amp)
    v_d, v_0 = cmd.V_d, cmd.V_0
    total = abs(v_amp) + abs(v_d) + abs(v_0)
    if total > supply_voltage:
        scale = supply_voltage / total
        v_amp, v_d, v_0 = v_amp * scale, v_d * scale, v_0 * scale
    return ControlInput(V_amp=v_amp, V_d=v_d, V_0=v_0, delta_sigma=dsig)


# ---------------------------------------------------------------------------
# trim
# ---------------------------------------------------------------------------

def find_trim(params, backend=None, torque_tol=1e-4, max_outer=3, n_avg=40):
    """Hover trim: per-axis secant nulling of the cycle-averaged roll,
    pitch, and yaw torques, finished with a bisection on V_amp for exact
    weight support.

    The cycle-averaged wrench is a deterministic but ragged function of the
    command (the passive rotation DOF bounces chaotically on its stops), so
    torques are nulled to ``torque_tol`` with wide secant probes and a long
    averaging window, while the final thrust bisection exploits continuity
    to land on weight support to high precision.

    Raises TrimError if weight support is infeasible within the supply
    voltage.
    """
    eng = make_engine(params, backend)
    weight = params.morphology.mass_total * GRAVITY
    supply = params.actuator.supply_voltage
    cmd = ControlInput(V_amp=6.0)

    def wrench(c):
        import warnings as _w
        from .sysid import NonConvergedWarning
        with _w.catch_warnings():
            _w.simplefilter("ignore", NonConvergedWarning)
            return cycle_averaged_wrench(c, params, engine=eng,
                                         n_avg=n_avg).to_array()

    def bisect_v_amp(c):
        # the thrust curve is continuous but chaotic at fine voltage scales,
        # so keep the best *evaluated* point rather than the bracket midpoint
        lo, hi = 0.5, supply - abs(c.V_d) - abs(c.V_0)
        if wrench(replace(c, V_amp=hi))[2] - weight < 0.0:
            raise TrimError("thrust cannot support weight within the supply "
                            "voltage")
        best_v, best_err = hi, abs(wrench(replace(c, V_amp=hi))[2] - weight)
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            fm = wrench(replace(c, V_amp=mid))[2] - weight
            if abs(fm) < best_err:
                best_v, best_err = mid, abs(fm)
            if fm > 0.0:
                hi = mid
            else:
                lo = mid
            if hi - lo < 1e-7:
                break
        return replace(c, V_amp=best_v)

    for _ in range(max_outer):
        cmd = bisect_v_amp(cmd)
        w0 = wrench(cmd)
        all_null = True
        for axis, field_, h in ((3, "V_d", 0.5), (4, "V_0", 0.5),
                                (5, "delta_sigma", 0.04)):
            if abs(w0[axis]) <= torque_tol:
                continue
            all_null = False
            x0 = getattr(cmd, field_)
            w1 = wrench(replace(cmd, **{field_: x0 + h}))
            slope = (w1[axis] - w0[axis]) / h
            if slope == 0.0:
                continue
            step = -w0[axis] / slope
            step = max(-2.0 * h, min(2.0 * h, step))
            cmd = replace(cmd, **{field_: x0 + step})
            w0 = wrench(cmd)
        if all_null:
            break
    # final thrust bisection at the nulled torque offsets
    return bisect_v_amp(cmd)


# ---------------------------------------------------------------------------
# closed loop
# ---------------------------------------------------------------------------

class ClosedLoopSim:
    """Physics + sensors + estimator + controller, advanced in control ticks.

    Each tick runs ``physics_per_tick`` 10 kHz steps, feeding the sensor
    suite, then drains due samples into the estimator and computes the next
    command. ``tick(residual=...)`` adds a (dV_amp, dV_d, dV_0, ddsig)
    residual to the controller output before clamping.
    """

    def __init__(self, params, setpoint=None, sensor_cfg=None, gains=None,
                 trim=None, backend=None, dt=DEFAULT_DT, seed=None,
                 initial=None, est_cfg=None):
        self.params = params
        self.dt = dt
        self.physics_per_tick = max(1, int(round(1.0 / (CONTROL_RATE * dt))))
        self.engine = make_engine(params, backend)
        cfg = sensor_cfg or SensorConfig()
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        self.sensors = SensorSuite(cfg, physics_dt=dt)
        init = initial if initial is not None else hover_state(params)
        self.state = init.to_array()
        self.estimator = Estimator(est_cfg, initial_state=init)
        if trim is None:
            trim = ControlInput(V_amp=8.1)
        self.controller = CascadeController(
            gains, trim, params.actuator.supply_voltage)
        self.setpoint = setpoint or Setpoint()
        self.cmd = trim
        self.loads = None

    def sim_state(self):
        return SimState.from_array(self.state)

    def tick(self, residual=None, setpoint=None):
        """One control tick. Returns (SimState, ControlInput applied)."""
        if setpoint is not None:
            self.setpoint = setpoint
        est = self.estimator.estimate(self.state[20])
        cmd = self.controller.control_step(est, self.setpoint)
        if residual is not None:
            r = np.asarray(residual, dtype=float)
            cmd = clamp_command(
                ControlInput(V_amp=cmd.V_amp + r[0], V_d=cmd.V_d + r[1],
                             V_0=cmd.V_0 + r[2],
                             delta_sigma=cmd.delta_sigma + r[3]),
                self.params.actuator.supply_voltage)
        self.cmd = cmd
        f = self.params.flap_frequency
        for _ in range(self.physics_per_tick):
            V_l, V_r = waveform(cmd, self.state[20], f)
            self.state, load_l, load_r, spec_f = self.engine.step_free(
                self.state, V_l, V_r, self.dt)
            self.loads = (load_l, load_r)
            self.sensors.tick(SimState.from_array(self.state), spec_f)
        t = self.state[20]
        for s in self.sensors.poll_mocap(t):
            self.estimator.update_mocap(s)
        for s in self.sensors.poll_imu(t):
            self.estimator.update_imu(s)
        return self.sim_state(), cmd


def fly_closed_loop(params, setpoint, duration, sensor_cfg=None, gains=None,
                    trim=None, backend=None, seed=0, log_decimate=20,
                    initial=None):
    """Closed-loop flight to a position/yaw setpoint; returns a
    TrajectoryLog sampled once per control tick by default."""
    sim = ClosedLoopSim(params, setpoint=setpoint, sensor_cfg=sensor_cfg,
                        gains=gains, trim=trim, backend=backend, seed=seed,
                        initial=initial)
    log = TrajectoryLog()
    n_ticks = int(round(duration * CONTROL_RATE))
    keep = max(1, log_decimate // sim.physics_per_tick)
    for i in range(n_ticks):
        state, cmd = sim.tick()
        if i % keep == 0:
            log.append(state.t, state, cmd, sim.loads)
    return log


def rms_report(log, setpoint, settle_time=5.0):
    """RMS attitude/position errors about a setpoint after the transient."""
    a = log.as_array()
    cols = log.columns
    t = a[:, cols.index("t")]
    mask = t >= settle_time
    out = {}
    for name, ref in (("x", setpoint.position[0]), ("y", setpoint.position[1]),
                      ("z", setpoint.position[2]), ("roll", 0.0),
                      ("pitch", 0.0), ("yaw", setpoint.yaw)):
        e = a[mask, cols.index(name)] - ref
        if name == "yaw":
            e = np.array([wrap_angle(v) for v in e])
        out[name] = float(np.sqrt(np.mean(e * e)))
    return out
