"""Virtual IMU and motion-capture sensors with rate, noise, bias and latency.

The IMU samples on a 500 Hz grid, mocap on a 150 Hz grid (exact decimations
of the 10 kHz physics loop). Delay is a fixed-latency FIFO: a sample taken at
time t becomes visible to the consumer at t + delay. All noise comes from one
seeded generator so sensor traces are reproducible.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .params import GRAVITY

IMU_RATE = 500.0
MOCAP_RATE = 150.0


@dataclass(frozen=True)
class ImuSample:
    """Body-frame rate gyro and specific-force accelerometer reading."""

    gyro: np.ndarray
    accel: np.ndarray
    timestamp: float


@dataclass(frozen=True)
class MocapSample:
    """World-frame pose reading (position + ZYX Euler attitude)."""

    position: np.ndarray
    orientation: np.ndarray
    timestamp: float


@dataclass
class SensorConfig:
    """Noise magnitudes, biases and delivery delays; all config-overridable."""

    gyro_sigma: float = 0.005          # rad/s white noise
    accel_sigma: float = 0.05          # m/s^2 white noise
    gyro_bias: tuple = (0.0, 0.0, 0.0)
    accel_bias: tuple = (0.0, 0.0, 0.0)
    mocap_pos_sigma: float = 0.5e-3    # m
    mocap_att_sigma: float = math.radians(0.2)
    imu_delay: float = 0.002           # s
    mocap_delay: float = 0.010         # s
    seed: int = 0

    @classmethod
    def from_dict(cls, d):
        kw = {}
        for f_ in ("gyro_sigma", "accel_sigma", "mocap_pos_sigma",
                   "mocap_att_sigma", "imu_delay", "mocap_delay", "seed"):
            if f_ in d:
                kw[f_] = d[f_]
        for f_ in ("gyro_bias", "accel_bias"):
            if f_ in d:
                kw[f_] = tuple(d[f_])
        return cls(**kw)

    def zero_noise(self):
        """Copy with all noise, bias and delay removed (truth passthrough)."""
        return SensorConfig(gyro_sigma=0.0, accel_sigma=0.0,
                            gyro_bias=(0.0, 0.0, 0.0),
                            accel_bias=(0.0, 0.0, 0.0),
                            mocap_pos_sigma=0.0, mocap_att_sigma=0.0,
                            imu_delay=0.0, mocap_delay=0.0, seed=self.seed)


def imu_read(true_state, accel_true, rng, cfg=None):
    """One IMU sample from ground truth.

    ``accel_true`` is the body-frame specific force (what an accelerometer
    measures: linear acceleration minus gravity; at rest it reads +g along
    body z for a level vehicle).
    """
    cfg = cfg or SensorConfig()
    gyro = np.array([true_state.p, true_state.q, true_state.r]) \
        + np.asarray(cfg.gyro_bias) \
        + cfg.gyro_sigma * rng.standard_normal(3)
    accel = np.asarray(accel_true, dtype=float) \
        + np.asarray(cfg.accel_bias) \
        + cfg.accel_sigma * rng.standard_normal(3)
    return ImuSample(gyro=gyro, accel=accel, timestamp=true_state.t)


def mocap_read(true_state, rng, cfg=None):
    """One mocap sample from ground truth."""
    cfg = cfg or SensorConfig()
    pos = np.array([true_state.x, true_state.y, true_state.z]) \
        + cfg.mocap_pos_sigma * rng.standard_normal(3)
    att = np.array([true_state.roll, true_state.pitch, true_state.yaw]) \
        + cfg.mocap_att_sigma * rng.standard_normal(3)
    return MocapSample(position=pos, orientation=att, timestamp=true_state.t)


def rest_specific_force(roll=0.0, pitch=0.0):
    """Specific force of a static vehicle (accelerometer truth input)."""
    sr, cr = math.sin(roll), math.cos(roll)
    sp, cp = math.sin(pitch), math.cos(pitch)
    return np.array([-GRAVITY * sp, GRAVITY * sr * cp, GRAVITY * cr * cp])


class SensorSuite:
    """Runs both sensors on their decimation grids with delayed delivery.

    Call ``tick(state, specific_force)`` every physics step; call
    ``poll_imu(t)`` / ``poll_mocap(t)`` to drain samples whose delivery
    time has arrived. Sampling grids are derived from the physics step
    count, so rates are exact.
    """

    def __init__(self, cfg=None, physics_dt=1.0e-4):
        self.cfg = cfg or SensorConfig()
        self.physics_dt = physics_dt
        self.imu_every = max(1, int(round(1.0 / (IMU_RATE * physics_dt))))
        self.mocap_every = max(1, int(round(1.0 / (MOCAP_RATE * physics_dt))))
        self.rng = np.random.default_rng(self.cfg.seed)
        self._imu_q = deque()
        self._mocap_q = deque()
        self._count = 0

    def tick(self, state, specific_force):
        self._count += 1
        if self._count % self.imu_every == 0:
            s = imu_read(state, specific_force, self.rng, self.cfg)
            self._imu_q.append((s.timestamp + self.cfg.imu_delay, s))
        if self._count % self.mocap_every == 0:
            s = mocap_read(state, self.rng, self.cfg)
            self._mocap_q.append((s.timestamp + self.cfg.mocap_delay, s))

    @staticmethod
    def _drain(queue, t):
        out = []
        while queue and queue[0][0] <= t + 1e-12:
            out.append(queue.popleft()[1])
        return out

    def poll_imu(self, t):
        return self._drain(self._imu_q, t)

    def poll_mocap(self, t):
        return self._drain(self._mocap_q, t)
