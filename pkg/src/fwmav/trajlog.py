"""CSV trajectory logging (fixed column order, SI units).

Column order: t, 12 body states, 8 wing states, 4 command inputs, 5 aero-load
scalars per wing, then any extra telemetry columns declared at construction.
"""

from __future__ import annotations

import numpy as np

BODY_COLUMNS = ("x", "y", "z", "roll", "pitch", "yaw",
                "u", "v", "w", "p", "q", "r")
WING_COLUMNS = ("psi_l", "theta_l", "psi_r", "theta_r",
                "dpsi_l", "dtheta_l", "dpsi_r", "dtheta_r")
INPUT_COLUMNS = ("V_amp", "V_d", "V_0", "delta_sigma")
LOAD_COLUMNS = ("F_N_l", "M_aero_l", "M_rd_l", "r_cp_l", "d_cp_l",
                "F_N_r", "M_aero_r", "M_rd_r", "r_cp_r", "d_cp_r")
COLUMNS = ("t",) + BODY_COLUMNS + WING_COLUMNS + INPUT_COLUMNS + LOAD_COLUMNS


class TrajectoryLog:
    """In-memory trajectory log with monotone-time enforcement.

    ``decimate=n`` keeps every n-th appended row (n=1 keeps all).
    """

    def __init__(self, extra_columns=(), decimate=1):
        if decimate < 1:
            raise ValueError("decimate must be >= 1")
        self.columns = COLUMNS + tuple(extra_columns)
        self.decimate = decimate
        self.rows = []
        self._last_t = None
        self._count = 0

    def __len__(self):
        return len(self.rows)

    def append(self, t, state, cmd, loads, extra=()):
        """Append one row. ``loads`` is the (left, right) AeroLoad pair."""
        if self._last_t is not None and t <= self._last_t:
            raise ValueError(
                f"non-monotone log time: t={t!r} after t={self._last_t!r}")
        self._last_t = t
        keep = self._count % self.decimate == 0
        self._count += 1
        if not keep:
            return
        load_l, load_r = loads
        row = (
            [t, state.x, state.y, state.z, state.roll, state.pitch, state.yaw,
             state.u, state.v, state.w, state.p, state.q, state.r,
             state.psi_l, state.theta_l, state.psi_r, state.theta_r,
             state.dpsi_l, state.dtheta_l, state.dpsi_r, state.dtheta_r,
             cmd.V_amp, cmd.V_d, cmd.V_0, cmd.delta_sigma]
            + list(load_l.to_tuple()) + list(load_r.to_tuple()) + list(extra))
        if len(row) != len(self.columns):
            raise ValueError("extra values do not match the declared columns")
        self.rows.append(row)

    def as_array(self):
        return np.array(self.rows, dtype=float)

    def column(self, name):
        return self.as_array()[:, self.columns.index(name)]

    def save(self, path):
        with open(path, "w") as f:
            f.write(",".join(self.columns) + "\n")
            for row in self.rows:
                f.write(",".join(repr(float(v)) for v in row) + "\n")

    @staticmethod
    def load(path):
        """Read a trajectory CSV back as (columns, array)."""
        with open(path) as f:
            header = f.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return tuple(header), data


def log_append(log, t, state, cmd, loads, extra=()):
    log.append(t, state, cmd, loads, extra)
