"""Pure-Python reference engine for the 10-DOF articulated vehicle.

Five rigid bodies (torso, two leading-edge frames, two wings) on a kinematic
tree with a free-floating base, driven stroke joints and passive rotation
joints. Generalized velocities are quasi-velocities: body-frame twist of the
torso plus the four joint rates. Each step assembles the 10x10 mass matrix
and bias vector by recursive Newton-Euler over the fixed topology and
integrates with semi-implicit (symplectic) Euler.

This module is the behavioral reference for the compiled engine in
``fwmav._engine``; keep the two in lockstep.
"""

from __future__ import annotations

import math

import numpy as np

from . import actuation
from .aero import (COUPLE_FORCE_EPS, INPLANE_SPEED_EPS, dcp_chordwise,
                   normal_coefficient, r_cp_spanwise)
from .kinematics import euler_rates, wrap_angle
from .params import GRAVITY, AeroLoad, chord_cubed_moment

# state array layout (matches SimState.FIELDS)
IX, IY, IZ, IROLL, IPITCH, IYAW = 0, 1, 2, 3, 4, 5
IU, IV, IW, IP, IQ, IR = 6, 7, 8, 9, 10, 11
IPSI_L, ITHETA_L, IPSI_R, ITHETA_R = 12, 13, 14, 15
IDPSI_L, IDTHETA_L, IDPSI_R, IDTHETA_R = 16, 17, 18, 19
IT = 20

STATE_DIM = 21


class IntegrationDivergedError(RuntimeError):
    """Raised when the state leaves the finite domain; carries the last
    valid state array."""

    def __init__(self, msg, last_state):
        super().__init__(msg)
        self.last_state = last_state


def _rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


class PythonEngine:
    """Reference implementation of the physics step."""

    backend = "python"

    def __init__(self, params, gravity=True, aero=True):
        self.params = params
        self.gravity_on = bool(gravity)
        self.aero_on = bool(aero)
        m = params.morphology
        w = params.wing
        a = params.aero

        self.m_torso = m.torso_mass
        self.I_torso = np.asarray(m.body_inertia, dtype=float)
        self.m_le = m.leading_edge_mass
        self.m_wing = m.wing_mass
        self.m_total = m.mass_total
        self.R_w = w.R_w
        self.c_bar = w.c_bar
        self.r_cp = r_cp_spanwise(w)

        # aero closed-form factors: F_N = cn * (k2*a2 + k1*a1 + k0*a0), etc.
        R, cb, rho = w.R_w, w.c_bar, a.rho_A
        self.kF = (0.5 * rho * cb * R**3 * w.r_hat_22,
                   0.5 * rho * cb * R**2 * w.r_hat_11,
                   0.5 * rho * cb * R * w.r_hat_00)
        self.kM = (0.5 * rho * cb**2 * R**3 * w.z_hat_cp2,
                   0.5 * rho * cb**2 * R**2 * w.z_hat_cp1,
                   0.5 * rho * cb**2 * R * w.z_hat_cp0)
        self.k_rd = 0.125 * rho * a.C_rd * R * cb**4 * w.z_hat_rd
        self.aero_params = a

        # per-side constants; index 0 = left, 1 = right. The left wing
        # extends along +y of its leading-edge frame (outboard, y is left)
        # and positive stroke sweeps both wingtips forward, so the right
        # side is the exact mirror image about the body x-z plane.
        self.sz = (-1.0, 1.0)        # stroke joint axis = sz * z_hat
        self.sy = (1.0, -1.0)        # span direction = sy * y_hat in LE frame
        self.r_shoulder = (np.array([0.0, m.d_0, m.d_s]),
                           np.array([0.0, -m.d_0, m.d_s]))
        self.act = (params.actuator.left, params.actuator.right)
        self.supply = params.actuator.supply_voltage

        # leading edge: slender rod along the span, CoM at mid-span
        rod_r = 1.0e-3
        I_perp = self.m_le * R**2 / 12.0
        I_ax = 0.5 * self.m_le * rod_r**2
        self.I_le = np.diag([I_perp, I_ax, I_perp])
        self.c_le = tuple(np.array([0.0, self.sy[k] * R / 2.0, 0.0])
                          for k in range(2))

        # wing: uniform flat plate in the span-chord plane of its own frame
        # (span along sy*y, chord along -z), moments from the chord profile
        z3 = chord_cubed_moment(w.chord_profile)
        Iyy_o = self.m_wing * cb**2 / 3.0 * z3
        Izz_o = self.m_wing * R**2 * w.r_hat_22
        Ixx_o = Iyy_o + Izz_o
        self.c_wing = tuple(np.array([0.0,
                                      self.sy[k] * R * w.r_hat_11 / w.r_hat_00,
                                      -0.5 * cb * w.z_hat_cp0 / w.r_hat_00])
                            for k in range(2))
        self.I_wing = []
        for k in range(2):
            Iyz = -self.sy[k] * (-0.5 * self.m_wing * cb * R * w.z_hat_cp1)
            I_o = np.array([[Ixx_o, 0.0, 0.0],
                            [0.0, Iyy_o, Iyz],
                            [0.0, Iyz, Izz_o]])
            c = self.c_wing[k]
            I_c = I_o - self.m_wing * (np.dot(c, c) * np.eye(3) - np.outer(c, c))
            self.I_wing.append(I_c)

        # AoA branch memory: sign of the last nonzero in-plane speed per wing
        self.last_sign = [1.0, 1.0]

    def reset_aero_state(self):
        self.last_sign = [1.0, 1.0]

    # ------------------------------------------------------------------
    # aerodynamics
    # ------------------------------------------------------------------

    def _wing_aero(self, k, s, omega0, v0):
        """Loads on wing k plus the frame-2 external wrench for the RNEA.

        Returns (AeroLoad, f2, p2, n2) with vectors expressed in the wing
        frame (frame 2), whose origin is the shoulder.
        """
        psi = s[IPSI_L + 2 * k]
        theta = s[ITHETA_L + 2 * k]
        dpsi = s[IDPSI_L + 2 * k]
        dtheta = s[IDTHETA_L + 2 * k]
        sz = self.sz[k]

        R1 = _rot_z(sz * psi)
        omega1 = R1.T @ omega0 + np.array([0.0, 0.0, sz * dpsi])
        v_sh = v0 + np.cross(omega0, self.r_shoulder[k])
        v1 = R1.T @ v_sh

        u_i1 = sz * omega1[2]
        u_i0 = v1[0]
        u_o1 = sz * omega1[0]
        u_o0 = -v1[2]

        u_i = u_i1 * self.r_cp + u_i0
        u_o = u_o1 * self.r_cp + u_o0
        if abs(u_i) >= INPLANE_SPEED_EPS:
            sgn = 1.0 if u_i > 0.0 else -1.0
            self.last_sign[k] = sgn
            alpha = theta + sgn * 0.5 * math.pi - math.atan(u_o / u_i)
        else:
            sgn = self.last_sign[k]
            alpha = theta + sgn * 0.5 * math.pi - math.atan2(u_o, u_i)
        alpha = wrap_angle(alpha)

        a2 = u_i1 * u_i1 + u_o1 * u_o1
        a1 = 2.0 * (u_i1 * u_i0 + u_o1 * u_o0)
        a0 = u_i0 * u_i0 + u_o0 * u_o0

        cn = normal_coefficient(alpha, self.aero_params)
        F_N = cn * (self.kF[0] * a2 + self.kF[1] * a1 + self.kF[2] * a0)
        M_aero = -dcp_chordwise(alpha, self.aero_params) * cn * (
            self.kM[0] * a2 + self.kM[1] * a1 + self.kM[2] * a0)
        M_rd = -self.k_rd * abs(dtheta) * dtheta
        couple = abs(F_N) < COUPLE_FORCE_EPS
        d_cp = 0.0 if couple else -M_aero / F_N
        load = AeroLoad(F_N=F_N, M_aero=M_aero, M_rd=M_rd,
                        r_cp=self.r_cp, d_cp=d_cp, couple=couple)

        f2 = np.array([-F_N, 0.0, 0.0])
        p2 = np.array([0.0, self.sy[k] * self.r_cp, -d_cp])
        n_axis = M_rd + (M_aero if couple else 0.0)
        n2 = np.array([0.0, -n_axis, 0.0])
        return load, f2, p2, n2

    # ------------------------------------------------------------------
    # joint torques
    # ------------------------------------------------------------------

    def _joint_torques(self, s, V_l, V_r):
        tau = np.zeros(4)
        for k, V in enumerate((V_l, V_r)):
            act = self.act[k]
            V = max(-self.supply, min(self.supply, V))
            psi = s[IPSI_L + 2 * k]
            theta = s[ITHETA_L + 2 * k]
            dpsi = s[IDPSI_L + 2 * k]
            dtheta = s[IDTHETA_L + 2 * k]
            gkt = act.gear_ratio * act.K_t
            tau_psi = gkt * (V - gkt * dpsi) / act.R_m
            d = psi - act.psi0
            tau_psi -= (act.K_s_pos if d >= 0.0 else act.K_s_neg) * d
            tau_psi += actuation.stop_torque(psi, dpsi, -act.stroke_limit,
                                             act.stroke_limit,
                                             act.stop_stiffness, act.stop_damping)
            tau_theta = actuation.stop_torque(theta, dtheta, act.Theta_neg,
                                              act.Theta_pos,
                                              act.stop_stiffness, act.stop_damping)
            tau[2 * k] = tau_psi
            tau[2 * k + 1] = tau_theta
        return tau

    # ------------------------------------------------------------------
    # recursive Newton-Euler over the fixed tree
    # ------------------------------------------------------------------

    def _inverse_dynamics(self, s, omega0, v0, alpha0, a0, joint_qd,
                          joint_dd, ext):
        """Generalized forces required for the given motion.

        ``a0`` is the torso CoM acceleration in the body frame with gravity
        already folded in (a0 = vdot + omega x v - g_body). ``joint_qd`` and
        ``joint_dd`` are the four joint rates and accelerations (rates must
        be passed explicitly so mass-matrix columns stay velocity-free),
        ``ext`` the per-wing external wrench (f2, p2, n2) in wing-frame
        coordinates, or None.
        """
        F_base = self.m_torso * a0
        N_base = self.I_torso @ alpha0 + np.cross(omega0, self.I_torso @ omega0)
        tau = np.zeros(4)

        for k in range(2):
            sz = self.sz[k]
            psi = s[IPSI_L + 2 * k]
            theta = s[ITHETA_L + 2 * k]
            dpsi = joint_qd[2 * k]
            dtheta = joint_qd[2 * k + 1]
            ddpsi = joint_dd[2 * k]
            ddtheta = joint_dd[2 * k + 1]
            r_s = self.r_shoulder[k]

            R1 = _rot_z(sz * psi)
            a_s = np.array([0.0, 0.0, sz])
            a_r = np.array([0.0, -1.0, 0.0])

            w0l = R1.T @ omega0
            omega1 = w0l + dpsi * a_s
            alpha1 = R1.T @ alpha0 + ddpsi * a_s + np.cross(w0l, dpsi * a_s)
            a_o1 = R1.T @ (a0 + np.cross(alpha0, r_s)
                           + np.cross(omega0, np.cross(omega0, r_s)))

            R2 = _rot_y(-theta)
            w1w = R2.T @ omega1
            omega2 = w1w + dtheta * a_r
            alpha2 = R2.T @ alpha1 + ddtheta * a_r + np.cross(w1w, dtheta * a_r)
            a_o2 = R2.T @ a_o1

            # wing
            c2 = self.c_wing[k]
            I2 = self.I_wing[k]
            a_c2 = a_o2 + np.cross(alpha2, c2) + np.cross(omega2, np.cross(omega2, c2))
            F2 = self.m_wing * a_c2
            N2 = I2 @ alpha2 + np.cross(omega2, I2 @ omega2) \
                + self.m_wing * np.cross(c2, a_c2)
            if ext is not None and ext[k] is not None:
                f2, p2, n2 = ext[k]
                F2 = F2 - f2
                N2 = N2 - n2 - np.cross(p2, f2)
            tau[2 * k + 1] = -N2[1]

            # leading edge
            c1 = self.c_le[k]
            a_c1 = a_o1 + np.cross(alpha1, c1) + np.cross(omega1, np.cross(omega1, c1))
            F1 = self.m_le * a_c1 + R2 @ F2
            N1 = self.I_le @ alpha1 + np.cross(omega1, self.I_le @ omega1) \
                + self.m_le * np.cross(c1, a_c1) + R2 @ N2
            tau[2 * k] = sz * N1[2]

            # sum each wing's contribution before accumulating so the left
            # and right terms cancel exactly at mirror-symmetric states
            Fb = R1 @ F1
            Nb = R1 @ N1 + np.cross(r_s, Fb)
            F_base = F_base + Fb
            N_base = N_base + Nb

        return np.concatenate([F_base, N_base, tau])

    def _gravity_body(self, s):
        """Gravity vector expressed in the body frame."""
        if not self.gravity_on:
            return np.zeros(3)
        roll, pitch = s[IROLL], s[IPITCH]
        # g_body = R_wb^T (0,0,-g); only the last row of R_wb matters
        sr, cr = math.sin(roll), math.cos(roll)
        sp, cp = math.sin(pitch), math.cos(pitch)
        return np.array([GRAVITY * sp, -GRAVITY * sr * cp, -GRAVITY * cr * cp])

    def mass_matrix(self, s):
        M = np.zeros((10, 10))
        zero3 = np.zeros(3)
        zero4 = np.zeros(4)
        for i in range(10):
            e = np.zeros(10)
            e[i] = 1.0
            M[:, i] = self._inverse_dynamics(
                s, zero3, zero3, e[3:6], e[0:3], zero4, e[6:10], None)
        return M

    def bias_forces(self, s, ext):
        omega0 = s[IP:IR + 1]
        v0 = s[IU:IW + 1]
        a0 = np.cross(omega0, v0) - self._gravity_body(s)
        return self._inverse_dynamics(s, omega0, v0, np.zeros(3), a0,
                                      s[IDPSI_L:IDTHETA_R + 1],
                                      np.zeros(4), ext)

    @staticmethod
    def _solve10(M, rhs):
        """Solve M x = rhs in a symmetric/antisymmetric joint basis.

        Replacing the four joint coordinates by left+right and left-right
        combinations makes the lateral dynamics (v, p, r and the joint
        difference) a structurally decoupled sub-block whenever the state is
        mirror-symmetric, so LU rounding cannot leak symmetric flapping into
        lateral motion. For asymmetric states this is just an exact linear
        change of variables.
        """
        l, r = slice(6, 8), slice(8, 10)
        Mp = np.empty((10, 10))
        Mp[:6, :6] = M[:6, :6]
        Mp[:6, l] = M[:6, l] + M[:6, r]
        Mp[:6, r] = M[:6, l] - M[:6, r]
        rl = M[l, :]
        rr = M[r, :]
        rs = rl + rr
        ra = rl - rr
        Mp[l, :6] = rs[:, :6]
        Mp[r, :6] = ra[:, :6]
        Mp[l, l] = rs[:, l] + rs[:, r]
        Mp[l, r] = rs[:, l] - rs[:, r]
        Mp[r, l] = ra[:, l] + ra[:, r]
        Mp[r, r] = ra[:, l] - ra[:, r]
        rhsp = np.concatenate([rhs[:6], rhs[l] + rhs[r], rhs[l] - rhs[r]])
        xp = np.linalg.solve(Mp, rhsp)
        return np.concatenate([xp[:6], xp[l] + xp[r], xp[l] - xp[r]])

    def accel(self, s, joint_tau, ext):
        """Forward dynamics: generalized accelerations (10,)."""
        M = self.mass_matrix(s)
        bias = self.bias_forces(s, ext)
        rhs = np.concatenate([np.zeros(6), joint_tau]) - bias
        return self._solve10(M, rhs)

    def _stop_damping(self, s):
        """Per-joint stop damping coefficients currently engaged (4,).

        The stop damper is far stiffer than the reduced rotation inertia
        allows for an explicit update (c*dt/I > 1 at the default step), so the
        steppers fold c*dt into the joint diagonal of the mass matrix and the
        damping acts on the end-of-step velocity instead.
        """
        d = np.zeros(4)
        for k in range(2):
            act = self.act[k]
            psi = s[IPSI_L + 2 * k]
            theta = s[ITHETA_L + 2 * k]
            dpsi = s[IDPSI_L + 2 * k]
            dtheta = s[IDTHETA_L + 2 * k]
            if (psi > act.stroke_limit and dpsi > 0.0) \
                    or (psi < -act.stroke_limit and dpsi < 0.0):
                d[2 * k] = act.stop_damping
            if (theta > act.Theta_pos and dtheta > 0.0) \
                    or (theta < act.Theta_neg and dtheta < 0.0):
                d[2 * k + 1] = act.stop_damping
        return d

    # ------------------------------------------------------------------
    # stepping
    # ------------------------------------------------------------------

    def step_free(self, s, V_l, V_r, dt):
        """One semi-implicit Euler step of the free-flying vehicle.

        Returns (new_state, load_l, load_r, specific_force).
        """
        omega0 = s[IP:IR + 1].copy()
        v0 = s[IU:IW + 1].copy()

        load_l, *ext_l = self._wing_aero(0, s, omega0, v0)
        load_r, *ext_r = self._wing_aero(1, s, omega0, v0)
        ext = (tuple(ext_l), tuple(ext_r)) if self.aero_on else None
        tau = self._joint_torques(s, V_l, V_r)

        M = self.mass_matrix(s)
        bias = self.bias_forces(s, ext)
        jj = np.arange(6, 10)
        M[jj, jj] += dt * self._stop_damping(s)
        nudot = self._solve10(M, np.concatenate([np.zeros(6), tau]) - bias)

        g_b = self._gravity_body(s)
        spec_force = nudot[0:3] + np.cross(omega0, v0) - g_b

        out = s.copy()
        out[IU:IR + 1] = s[IU:IR + 1] + dt * nudot[0:6]
        out[IDPSI_L:IDTHETA_R + 1] = s[IDPSI_L:IDTHETA_R + 1] + dt * nudot[6:10]

        # positions with the updated velocities (symplectic Euler)
        roll, pitch, yaw = s[IROLL], s[IPITCH], s[IYAW]
        dr, dp, dy = euler_rates(roll, pitch, out[IP], out[IQ], out[IR])
        sr, cr = math.sin(roll), math.cos(roll)
        sp, cp = math.sin(pitch), math.cos(pitch)
        sy, cy = math.sin(yaw), math.cos(yaw)
        R_wb = np.array([
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr]])
        out[IX:IZ + 1] = s[IX:IZ + 1] + dt * (R_wb @ out[IU:IW + 1])
        out[IROLL] = roll + dt * dr
        out[IPITCH] = pitch + dt * dp
        out[IYAW] = yaw + dt * dy
        out[IPSI_L:ITHETA_R + 1] = s[IPSI_L:ITHETA_R + 1] \
            + dt * out[IDPSI_L:IDTHETA_R + 1]
        out[IT] = s[IT] + dt

        if not np.all(np.isfinite(out)):
            raise IntegrationDivergedError(
                f"integration diverged at t={s[IT]:.6f}", s.copy())
        return out, load_l, load_r, spec_force

    def step_clamped(self, s, V_l, V_r, dt):
        """One step with the six body DOFs locked (force-stand emulation).

        Returns (new_state, load_l, load_r, hold_wrench) where hold_wrench is
        the body-frame force/torque (about the CoM) the clamp must supply.
        """
        zero3 = np.zeros(3)
        load_l, *ext_l = self._wing_aero(0, s, zero3, zero3)
        load_r, *ext_r = self._wing_aero(1, s, zero3, zero3)
        ext = (tuple(ext_l), tuple(ext_r)) if self.aero_on else None
        tau = self._joint_torques(s, V_l, V_r)

        bias = self.bias_forces(s, ext)
        M4 = np.zeros((4, 4))
        Mb = np.zeros((6, 4))
        for j in range(4):
            e = np.zeros(4)
            e[j] = 1.0
            col = self._inverse_dynamics(s, zero3, zero3, zero3, zero3,
                                         np.zeros(4), e, None)
            M4[:, j] = col[6:10]
            Mb[:, j] = col[0:6]
        M4[np.arange(4), np.arange(4)] += dt * self._stop_damping(s)
        dd = np.linalg.solve(M4, tau - bias[6:10])
        hold = bias[0:6] + Mb @ dd

        out = s.copy()
        out[IDPSI_L:IDTHETA_R + 1] = s[IDPSI_L:IDTHETA_R + 1] + dt * dd
        out[IPSI_L:ITHETA_R + 1] = s[IPSI_L:ITHETA_R + 1] \
            + dt * out[IDPSI_L:IDTHETA_R + 1]
        out[IT] = s[IT] + dt
        if not np.all(np.isfinite(out)):
            raise IntegrationDivergedError(
                f"integration diverged at t={s[IT]:.6f}", s.copy())
        return out, load_l, load_r, hold

    def static_hold_wrench(self, s):
        """Clamp wrench with all rates and accelerations zero (tare reading)."""
        return self.bias_forces(s, None)[0:6]

    @property
    def backend(self):
        return "python"

    def run_open_loop(self, s, cmd, f, dt, n_steps, clamped=False):
        """Integrate n_steps under a fixed wingbeat-modulation command.

        ``cmd`` is (V_amp, V_d, V_0, delta_sigma). Returns the final state.
        Same semantics as the compiled engine's loop fast path.
        """
        V_amp, V_d, V_0, dsig = cmd
        if abs(dsig) >= 0.5:
            raise ValueError("|delta_sigma| must be < 0.5")
        step = self.step_clamped if clamped else self.step_free
        s = np.asarray(s, dtype=float).copy()
        for _ in range(n_steps):
            tau = s[IT] * f - math.floor(s[IT] * f)
            sw_l = _split_cycle_scalar(tau, dsig)
            sw_r = _split_cycle_scalar(tau, -dsig)
            s, _, _, _ = step(s, (V_amp - V_d) * sw_l + V_0,
                              (V_amp + V_d) * sw_r + V_0, dt)
        return s

    def clamped_cycle_average(self, s, cmd, f, dt, n_startup, n_avg):
        """Clamped run under a fixed command; per-wingbeat mean hold wrench.

        Integrates n_startup + n_avg wingbeats with the body locked and
        returns (cycle_means, final_state): cycle_means has shape (n_avg, 6),
        the negated mean hold wrench (load applied to the stand) per
        averaging wingbeat, without tare subtraction.
        """
        V_amp, V_d, V_0, dsig = cmd
        if abs(dsig) >= 0.5:
            raise ValueError("|delta_sigma| must be < 0.5")
        s = np.asarray(s, dtype=float).copy()
        means = np.zeros((n_avg, 6))
        counts = np.zeros(n_avg)
        n_steps = int(math.floor((n_startup + n_avg) / (f * dt) + 0.5))
        t0 = s[IT]
        for _ in range(n_steps):
            tau = s[IT] * f - math.floor(s[IT] * f)
            sw_l = _split_cycle_scalar(tau, dsig)
            sw_r = _split_cycle_scalar(tau, -dsig)
            out, _, _, hold = self.step_clamped(
                s, (V_amp - V_d) * sw_l + V_0, (V_amp + V_d) * sw_r + V_0, dt)
            c = int(math.floor((s[IT] - t0) * f)) - n_startup
            if 0 <= c < n_avg:
                means[c] += -hold
                counts[c] += 1.0
            s = out
        means /= counts[:, None]
        return means, s


def _split_cycle_scalar(tau, dsig):
    d1 = 0.5 - dsig
    d2 = 0.5 + dsig
    if tau < d1:
        return math.sin(math.pi * tau / d1)
    return -(d1 / d2) * math.sin(math.pi * (tau - d1) / d2)
