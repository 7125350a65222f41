"""Episodic MDP interface over the simulator.

Two tasks: ``open_loop`` drives raw per-motor voltages held for one wingbeat
per step; ``maneuver`` adds a residual command on top of the cascade hover
controller at the 500 Hz control rate. Includes dynamics randomization for
domain-randomized training and a length-prefixed JSON socket server so
external RL clients can run episodes out of process.
"""

from __future__ import annotations

import json
import math
import socket
import socketserver
import struct
from dataclasses import dataclass, replace

import numpy as np

from .config import reference_vehicle
from .control import CONTROL_RATE, ClosedLoopSim, Setpoint
from .dynamics import DEFAULT_DT, hover_state
from .engine import make_engine
from .kinematics import wrap_angle
from .params import SimState

OBSERVATION_DIM = 12

# reward shape: multiplicative Gaussian goal kernels, action/time penalties
W_POS = 1.0
W_YAW = 1.0
SIGMA_P = 0.05            # m
SIGMA_PSI = math.radians(15.0)
W_ACTION = 1.0e-3         # per squared residual unit
W_TIME = 1.0e-3           # per step

# termination
GOAL_POS_TOL = 0.05       # m
GOAL_YAW_TOL = math.radians(10.0)
GOAL_HOLD_TIME = 0.5      # s
ATT_LIMIT = math.radians(80.0)   # roll/pitch envelope
POS_LIMIT = 2.0           # m from the world origin

# residual action box for the maneuver task (dV_amp, dV_d, dV_0, ddsig)
RESIDUAL_BOUNDS = (4.0, 4.0, 4.0, 0.3)


class EpisodeError(RuntimeError):
    """Protocol misuse: stepping a finished or unstarted episode."""


@dataclass(frozen=True)
class EpisodeSpec:
    """Episode definition: task, start/goal pose, horizon and timing."""

    task: str = "maneuver"            # "open_loop" | "maneuver"
    p_0: tuple = (0.0, 0.0, 0.0)
    psi_0: float = 0.0
    p_f: tuple = (0.0, 0.0, 0.4)
    psi_f: float = 0.0
    horizon: int = 5000               # steps
    control_dt: float = None          # s; default set per task
    seed: int = 0
    randomize: bool = False
    randomize_delta: float = 0.05

    def __post_init__(self):
        if self.task not in ("open_loop", "maneuver"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.horizon <= 0:
            raise ValueError("horizon must be > 0")
        if self.control_dt is not None and self.control_dt <= 0.0:
            raise ValueError("control_dt must be > 0")

    def resolved_control_dt(self, flap_frequency, physics_dt=DEFAULT_DT):
        """Task default: one wingbeat (open loop) or one control tick."""
        dt = self.control_dt
        if dt is None:
            if self.task == "open_loop":
                # one wingbeat, snapped to the physics grid
                dt = max(1, round(1.0 / (flap_frequency * physics_dt))) \
                    * physics_dt
            else:
                dt = 1.0 / CONTROL_RATE
        n = dt / physics_dt
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ValueError("control_dt must be a positive multiple of the "
                             "physics dt")
        return dt, int(round(n))

    @property
    def action_dim(self):
        return 2 if self.task == "open_loop" else 4

    @classmethod
    def from_dict(cls, d):
        kw = {}
        for f_ in cls.__dataclass_fields__:
            if f_ in d:
                v = d[f_]
                kw[f_] = tuple(v) if isinstance(v, list) else v
        return cls(**kw)


def reward_maneuver(state, spec, residual=None):
    """Goal-proximity reward: product of Gaussian kernels on position and
    heading, minus residual-effort and time penalties. Maximal exactly at
    (p_f, psi_f) with zero residual."""
    s = np.asarray(state, dtype=float)
    dp = s[0:3] - np.asarray(spec.p_f, dtype=float)
    dpsi = wrap_angle(s[5] - spec.psi_f)
    r = (W_POS * math.exp(-float(dp @ dp) / SIGMA_P**2)
         * W_YAW * math.exp(-dpsi * dpsi / SIGMA_PSI**2))
    if residual is not None:
        a = np.asarray(residual, dtype=float)
        r -= W_ACTION * float(a @ a)
    return r - W_TIME


def randomize_dynamics(params, seed, delta=0.05, angle_delta=None):
    """Perturb the 12 identification parameters plus mass and body inertia.

    Multiplicative uniform (1 +- delta) on scale-type parameters, additive
    uniform +- angle_delta on angles (default 2 deg, scaled with delta so
    delta = 0 is the identity). Deterministic per seed.
    """
    if angle_delta is None:
        angle_delta = math.radians(2.0) * (delta / 0.05 if delta else 0.0)
    if delta == 0.0 and angle_delta == 0.0:
        return params
    rng = np.random.default_rng(seed)
    x = params.sysid_vector()
    # order: R_m x2, K_s x4 (scale), psi0 x2, Theta x4 (angles)
    u = rng.uniform(-1.0, 1.0, size=12)
    x[0:6] *= 1.0 + delta * u[0:6]
    x[6:12] += angle_delta * u[6:12]
    out = params.with_sysid_vector(x)
    m = out.morphology
    mass = m.mass_total * (1.0 + delta * rng.uniform(-1.0, 1.0))
    inertia = np.asarray(m.body_inertia) * (1.0 + delta * rng.uniform(-1.0, 1.0))
    out = replace(out, morphology=replace(m, mass_total=mass,
                                          body_inertia=inertia))
    return out


def _initial_state(params, spec):
    x, y, z = (float(v) for v in spec.p_0)
    return hover_state(params, x=x, y=y, z=z, yaw=float(spec.psi_0))


class FwmavEnv:
    """Episodic environment over the simulator (reset/step/reward).

    Observations are the true 12 body states (position, ZYX Euler attitude,
    body-frame linear velocity, body rates). Open-loop actions are raw
    (V_l, V_r) held for the step; maneuver actions are residual
    (dV_amp, dV_d, dV_0, ddsig) added to the hover controller's output.
    """

    def __init__(self, spec, params=None, gains=None, trim=None, backend=None,
                 physics_dt=DEFAULT_DT):
        self.spec = spec
        self.base_params = params if params is not None else reference_vehicle()
        self.gains = gains
        self.trim = trim
        self.backend = backend
        self.physics_dt = physics_dt
        self.control_dt, self.steps_per_action = spec.resolved_control_dt(
            self.base_params.flap_frequency, physics_dt)
        if spec.task == "maneuver" and abs(
                self.control_dt - 1.0 / CONTROL_RATE) > 1e-12:
            raise ValueError("maneuver control_dt must be one control tick "
                             f"(1/{CONTROL_RATE:g} s)")
        self.observation_dim = OBSERVATION_DIM
        self.action_dim = spec.action_dim
        self._active = False
        self.params = None
        self._sim = None
        self._engine = None
        self._state = None

    def action_bounds(self):
        """(low, high) arrays for the task's action box."""
        if self.spec.task == "open_loop":
            v = self.base_params.actuator.supply_voltage
            lo = -np.ones(2) * v
        else:
            lo = -np.asarray(RESIDUAL_BOUNDS, dtype=float)
        return lo, -lo

    def reset(self):
        """Start a new episode; returns the initial 12-vector observation."""
        spec = self.spec
        self.params = (randomize_dynamics(self.base_params, spec.seed,
                                          spec.randomize_delta)
                       if spec.randomize else self.base_params)
        init = _initial_state(self.params, spec)
        if spec.task == "maneuver":
            self._sim = ClosedLoopSim(
                self.params,
                setpoint=Setpoint(position=tuple(spec.p_f), yaw=spec.psi_f),
                gains=self.gains, trim=self.trim, backend=self.backend,
                dt=self.physics_dt, seed=spec.seed, initial=init)
            self._state = self._sim.state
        else:
            self._engine = make_engine(self.params, self.backend)
            self._engine.reset_aero_state()
            self._state = init.to_array()
        self._active = True
        self._step_count = 0
        self._hold_ticks = 0
        return self.observe()

    def observe(self):
        return np.asarray(self._state[0:12], dtype=float).copy()

    def sim_state(self):
        return SimState.from_array(self._state)

    def step(self, action):
        """Advance one control interval. Returns (obs, reward, done, info)."""
        if not self._active:
            raise EpisodeError("step() on an inactive episode; call reset()")
        lo, hi = self.action_bounds()
        a = np.clip(np.asarray(action, dtype=float), lo, hi)
        if a.shape != (self.action_dim,):
            raise ValueError(f"action must have {self.action_dim} entries")
        if self.spec.task == "maneuver":
            # a zero residual must leave the controller's command untouched
            residual = a if np.any(a != 0.0) else None
            state, _ = self._sim.tick(residual=residual)
            self._state = self._sim.state
            reward = reward_maneuver(self._state, self.spec, residual=a)
        else:
            eng = self._engine
            s = self._state
            for _ in range(self.steps_per_action):
                s, _, _, _ = eng.step_free(s, float(a[0]), float(a[1]),
                                           self.physics_dt)
            self._state = s
            reward = reward_maneuver(self._state, self.spec)
        self._step_count += 1
        done, info = self._termination()
        if done:
            self._active = False
        return self.observe(), reward, done, info

    def _termination(self):
        s = self._state
        info = {"t": float(s[20]), "success": False, "failure": False,
                "timeout": False}
        if (abs(s[3]) > ATT_LIMIT or abs(s[4]) > ATT_LIMIT
                or float(np.linalg.norm(s[0:3])) > POS_LIMIT
                or not np.all(np.isfinite(s))):
            info["failure"] = True
            return True, info
        dp = np.linalg.norm(s[0:3] - np.asarray(self.spec.p_f))
        dpsi = abs(wrap_angle(s[5] - self.spec.psi_f))
        if dp <= GOAL_POS_TOL and dpsi <= GOAL_YAW_TOL:
            self._hold_ticks += 1
        else:
            self._hold_ticks = 0
        if self._hold_ticks * self.control_dt >= GOAL_HOLD_TIME:
            info["success"] = True
            return True, info
        if self._step_count >= self.spec.horizon:
            info["timeout"] = True
            return True, info
        return False, info


# ---------------------------------------------------------------------------
# wire protocol: length-prefixed JSON over a stream socket
# ---------------------------------------------------------------------------
#
# Frames are a 4-byte big-endian unsigned length followed by a UTF-8 JSON
# object. One outstanding request per connection; one environment per
# connection. Messages:
#   {"op": "handshake", "spec": {...EpisodeSpec fields...}}
#       -> {"ok": true, "observation_dim": 12, "action_dim": 2|4,
#           "action_low": [...], "action_high": [...], "task": ...}
#   {"op": "reset"}  -> {"ok": true, "observation": [12 floats]}
#   {"op": "step", "action": [...]}
#       -> {"ok": true, "observation": [...], "reward": f, "done": b,
#           "info": {...}}
#   {"op": "close"}  -> {"ok": true}, connection closed
# Errors reply {"ok": false, "error": msg} and close the connection.

MAX_FRAME = 1 << 20


def send_frame(sock, obj):
    data = json.dumps(obj).encode("utf-8")
    sock.sendall(struct.pack(">I", len(data)) + data)


def recv_frame(sock):
    head = _recv_exact(sock, 4)
    if head is None:
        return None
    n = struct.unpack(">I", head)[0]
    if n > MAX_FRAME:
        raise ValueError(f"frame of {n} bytes exceeds the {MAX_FRAME} limit")
    body = _recv_exact(sock, n)
    if body is None:
        raise ValueError("connection closed mid-frame")
    return json.loads(body.decode("utf-8"))


def _recv_exact(sock, n):
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


class _SessionHandler(socketserver.BaseRequestHandler):
    def handle(self):
        env = None
        try:
            while True:
                msg = recv_frame(self.request)
                if msg is None:
                    break
                op = msg.get("op")
                if op == "handshake":
                    spec = EpisodeSpec.from_dict(msg.get("spec", {}))
                    env = FwmavEnv(spec, params=self.server.params,
                                   gains=self.server.gains,
                                   trim=self.server.trim,
                                   backend=self.server.backend)
                    lo, hi = env.action_bounds()
                    send_frame(self.request, {
                        "ok": True,
                        "observation_dim": env.observation_dim,
                        "action_dim": env.action_dim,
                        "action_low": [float(v) for v in lo],
                        "action_high": [float(v) for v in hi],
                        "task": spec.task,
                    })
                elif op == "reset":
                    if env is None:
                        raise EpisodeError("reset before handshake")
                    obs = env.reset()
                    send_frame(self.request, {
                        "ok": True,
                        "observation": [float(v) for v in obs]})
                elif op == "step":
                    if env is None:
                        raise EpisodeError("step before handshake")
                    obs, reward, done, info = env.step(msg["action"])
                    send_frame(self.request, {
                        "ok": True,
                        "observation": [float(v) for v in obs],
                        "reward": float(reward), "done": bool(done),
                        "info": info})
                elif op == "close":
                    send_frame(self.request, {"ok": True})
                    break
                else:
                    raise ValueError(f"unknown op {op!r}")
        except (ValueError, KeyError, TypeError, EpisodeError) as e:
            try:
                send_frame(self.request, {"ok": False, "error": str(e)})
            except OSError:
                pass
        except (ConnectionError, OSError):
            pass


class EnvServer(socketserver.ThreadingTCPServer):
    """One environment session per connection, no shared mutable state."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, params=None, gains=None, trim=None,
                 backend=None):
        super().__init__(address, _SessionHandler)
        self.params = params if params is not None else reference_vehicle()
        self.gains = gains
        self.trim = trim
        self.backend = backend

    @property
    def address(self):
        return self.server_address


def serve(address, params=None, **kwargs):
    """Create a wire-protocol environment server bound to (host, port).

    Returns the server; call ``serve_forever()`` to run it (blocking) or
    drive it from a background thread and ``shutdown()`` it."""
    return EnvServer(tuple(address), params=params, **kwargs)


def connect(address, timeout=30.0):
    """Open a client socket to an environment server."""
    sock = socket.create_connection(tuple(address), timeout=timeout)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return sock
