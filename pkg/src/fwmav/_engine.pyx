# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled engine for the 10-DOF articulated vehicle.

Same physics as ``fwmav._engine_py.PythonEngine`` (the behavioral reference),
transcribed to C-level scalar arithmetic. The per-wing operation order is kept
identical between the two wings so left/right contributions cancel exactly at
mirror-symmetric states, and the linear solve runs in the same
symmetric/antisymmetric joint basis as the reference.
"""

from libc.math cimport atan, atan2, cos, fabs, floor, fmod, isfinite, sin, tan

import numpy as np

from ._engine_py import IntegrationDivergedError, PythonEngine
from .params import GRAVITY, AeroLoad

cdef double C_GRAVITY = GRAVITY
cdef double PI = 3.141592653589793
cdef double INPLANE_EPS = 1e-9
cdef double COUPLE_EPS = 1e-9

# state layout indices (match SimState.FIELDS)
cdef int IX = 0, IY = 1, IZ = 2, IROLL = 3, IPITCH = 4, IYAW = 5
cdef int IU = 6, IV = 7, IW = 8, IP = 9, IQ = 10, IR = 11
cdef int IPSI_L = 12, ITHETA_L = 13, IPSI_R = 14, ITHETA_R = 15
cdef int IDPSI_L = 16, IDTHETA_L = 17, IDPSI_R = 18, IDTHETA_R = 19
cdef int IT = 20
cdef int STATE_DIM = 21

cdef int MAX_COEF = 16


cdef inline void cross3(double *a, double *b, double *out) noexcept nogil:
    # alias-safe: out may be a or b
    cdef double x = a[1] * b[2] - a[2] * b[1]
    cdef double y = a[2] * b[0] - a[0] * b[2]
    cdef double z = a[0] * b[1] - a[1] * b[0]
    out[0] = x
    out[1] = y
    out[2] = z


cdef inline void matvec3(double *M, double *v, double *out) noexcept nogil:
    out[0] = M[0] * v[0] + M[1] * v[1] + M[2] * v[2]
    out[1] = M[3] * v[0] + M[4] * v[1] + M[5] * v[2]
    out[2] = M[6] * v[0] + M[7] * v[1] + M[8] * v[2]


cdef inline void rotz_T(double c, double s, double *v, double *out) noexcept nogil:
    # Rz(a)^T v with c = cos a, s = sin a
    out[0] = c * v[0] + s * v[1]
    out[1] = -s * v[0] + c * v[1]
    out[2] = v[2]


cdef inline void rotz(double c, double s, double *v, double *out) noexcept nogil:
    out[0] = c * v[0] - s * v[1]
    out[1] = s * v[0] + c * v[1]
    out[2] = v[2]


cdef inline void roty_T(double c, double s, double *v, double *out) noexcept nogil:
    # Ry(a)^T v with c = cos a, s = sin a
    out[0] = c * v[0] - s * v[2]
    out[1] = v[1]
    out[2] = s * v[0] + c * v[2]


cdef inline void roty(double c, double s, double *v, double *out) noexcept nogil:
    out[0] = c * v[0] + s * v[2]
    out[1] = v[1]
    out[2] = -s * v[0] + c * v[2]


cdef inline double wrap_angle(double a) noexcept nogil:
    cdef double w = fmod(a + PI, 2.0 * PI)
    if w <= 0.0:
        w += 2.0 * PI
    return w - PI


cdef inline double clampd(double x, double lo, double hi) noexcept nogil:
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


cdef inline double stop_torque(double x, double x_dot, double lo, double hi,
                               double k, double c) noexcept nogil:
    cdef double tau
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


cdef int lu_solve(double *A, double *b, int n) noexcept nogil:
    """In-place LU with partial pivoting; returns 0 on success, -1 singular."""
    cdef int i, j, k, piv
    cdef double amax, tmp, m
    for k in range(n):
        piv = k
        amax = fabs(A[k * n + k])
        for i in range(k + 1, n):
            if fabs(A[i * n + k]) > amax:
                amax = fabs(A[i * n + k])
                piv = i
        if amax == 0.0:
            return -1
        if piv != k:
            for j in range(n):
                tmp = A[k * n + j]
                A[k * n + j] = A[piv * n + j]
                A[piv * n + j] = tmp
            tmp = b[k]
            b[k] = b[piv]
            b[piv] = tmp
        for i in range(k + 1, n):
            m = A[i * n + k] / A[k * n + k]
            if m != 0.0:
                for j in range(k + 1, n):
                    A[i * n + j] -= m * A[k * n + j]
                b[i] -= m * b[k]
            A[i * n + k] = 0.0
    for i in range(n - 1, -1, -1):
        tmp = b[i]
        for j in range(i + 1, n):
            tmp -= A[i * n + j] * b[j]
        b[i] = tmp / A[i * n + i]
    return 0


cdef class CythonEngine:
    """Compiled counterpart of the pure-Python reference engine."""

    cdef public object params
    cdef public bint gravity_on
    cdef public bint aero_on
    cdef public double m_torso, m_le, m_wing, m_total, R_w, c_bar, r_cp, k_rd
    cdef public double supply
    cdef double I_torso[9]
    cdef double I_le_[9]
    cdef double kF[3]
    cdef double kM[3]
    cdef double sz[2]
    cdef double sy[2]
    cdef double r_sh[2][3]
    cdef double c_le_[2][3]
    cdef double c_wing_[2][3]
    cdef double I_wing_[2][9]
    cdef double act_Rm[2]
    cdef double act_gkt[2]
    cdef double act_Ksp[2]
    cdef double act_Ksn[2]
    cdef double act_psi0[2]
    cdef double act_Thp[2]
    cdef double act_Thn[2]
    cdef double act_k[2]
    cdef double act_c[2]
    cdef double act_lim[2]
    cdef double cn_c[16]
    cdef double dcp_c[16]
    cdef int n_cn, n_dcp
    cdef double last_sign_[2]

    def __init__(self, params, gravity=True, aero=True):
        # precompute constants through the reference implementation so both
        # backends agree to the last bit on every derived parameter
        cdef int i, j, k
        ref = PythonEngine(params, gravity=gravity, aero=aero)
        self.params = params
        self.gravity_on = ref.gravity_on
        self.aero_on = ref.aero_on
        self.m_torso = ref.m_torso
        self.m_le = ref.m_le
        self.m_wing = ref.m_wing
        self.m_total = ref.m_total
        self.R_w = ref.R_w
        self.c_bar = ref.c_bar
        self.r_cp = ref.r_cp
        self.k_rd = ref.k_rd
        self.supply = ref.supply
        for i in range(3):
            self.kF[i] = ref.kF[i]
            self.kM[i] = ref.kM[i]
            for j in range(3):
                self.I_torso[3 * i + j] = ref.I_torso[i, j]
                self.I_le_[3 * i + j] = ref.I_le[i, j]
        for k in range(2):
            self.sz[k] = ref.sz[k]
            self.sy[k] = ref.sy[k]
            for i in range(3):
                self.r_sh[k][i] = ref.r_shoulder[k][i]
                self.c_le_[k][i] = ref.c_le[k][i]
                self.c_wing_[k][i] = ref.c_wing[k][i]
                for j in range(3):
                    self.I_wing_[k][3 * i + j] = ref.I_wing[k][i, j]
            act = ref.act[k]
            self.act_Rm[k] = act.R_m
            self.act_gkt[k] = act.gear_ratio * act.K_t
            self.act_Ksp[k] = act.K_s_pos
            self.act_Ksn[k] = act.K_s_neg
            self.act_psi0[k] = act.psi0
            self.act_Thp[k] = act.Theta_pos
            self.act_Thn[k] = act.Theta_neg
            self.act_k[k] = act.stop_stiffness
            self.act_c[k] = act.stop_damping
            self.act_lim[k] = act.stroke_limit
        aero_p = params.aero
        self.n_cn = min(len(aero_p.cn_coeffs), MAX_COEF)
        for i in range(self.n_cn):
            self.cn_c[i] = aero_p.cn_coeffs[i]
        self.n_dcp = min(len(aero_p.dcp_coeffs), MAX_COEF)
        for i in range(self.n_dcp):
            self.dcp_c[i] = aero_p.dcp_coeffs[i]
        self.last_sign_[0] = 1.0
        self.last_sign_[1] = 1.0

    @property
    def backend(self):
        return "cython"

    @property
    def last_sign(self):
        return [self.last_sign_[0], self.last_sign_[1]]

    @last_sign.setter
    def last_sign(self, value):
        self.last_sign_[0] = value[0]
        self.last_sign_[1] = value[1]

    def reset_aero_state(self):
        self.last_sign_[0] = 1.0
        self.last_sign_[1] = 1.0

    @property
    def c_wing(self):
        return (np.array([self.c_wing_[0][i] for i in range(3)]),
                np.array([self.c_wing_[1][i] for i in range(3)]))

    @property
    def I_wing(self):
        return [np.array([[self.I_wing_[k][3 * i + j] for j in range(3)]
                          for i in range(3)]) for k in range(2)]

    @property
    def c_le(self):
        return (np.array([self.c_le_[0][i] for i in range(3)]),
                np.array([self.c_le_[1][i] for i in range(3)]))

    @property
    def I_le(self):
        return np.array([[self.I_le_[3 * i + j] for j in range(3)]
                         for i in range(3)])

    @property
    def r_shoulder(self):
        return (np.array([self.r_sh[0][i] for i in range(3)]),
                np.array([self.r_sh[1][i] for i in range(3)]))

    # ------------------------------------------------------------------
    # C kernels
    # ------------------------------------------------------------------

    cdef double _cn(self, double alpha) noexcept nogil:
        cdef double out = 0.0
        cdef int k
        for k in range(self.n_cn):
            out += self.cn_c[k] * sin((k + 1) * alpha)
        return out

    cdef double _dcp(self, double alpha) noexcept nogil:
        cdef double d = self.dcp_c[0]
        cdef int k
        for k in range(1, self.n_dcp):
            d += self.dcp_c[k] * cos(k * alpha)
        if d < 0.0:
            return 0.0
        if d > 1.0:
            return 1.0
        return d

    cdef void _wing_aero_c(self, int k, double *s, double *omega0, double *v0,
                           double *load5, double *f2, double *p2,
                           double *n2) noexcept nogil:
        """load5 = (F_N, M_aero, M_rd, d_cp, couple_flag)."""
        cdef double psi = s[IPSI_L + 2 * k]
        cdef double theta = s[ITHETA_L + 2 * k]
        cdef double dpsi = s[IDPSI_L + 2 * k]
        cdef double dtheta = s[IDTHETA_L + 2 * k]
        cdef double sz = self.sz[k]
        cdef double ca = cos(sz * psi), sa = sin(sz * psi)
        cdef double w0l[3]
        cdef double omega1[3]
        cdef double v_sh[3]
        cdef double tmp[3]
        cdef double v1[3]
        cdef double u_i1, u_i0, u_o1, u_o0, u_i, u_o, sgn, alpha
        cdef double a2, a1, a0, cn, F_N, M_aero, M_rd, d_cp
        cdef bint couple

        rotz_T(ca, sa, omega0, w0l)
        omega1[0] = w0l[0]
        omega1[1] = w0l[1]
        omega1[2] = w0l[2] + dpsi * sz
        cross3(omega0, self.r_sh[k], tmp)
        v_sh[0] = v0[0] + tmp[0]
        v_sh[1] = v0[1] + tmp[1]
        v_sh[2] = v0[2] + tmp[2]
        rotz_T(ca, sa, v_sh, v1)

        u_i1 = sz * omega1[2]
        u_i0 = v1[0]
        u_o1 = sz * omega1[0]
        u_o0 = -v1[2]
        u_i = u_i1 * self.r_cp + u_i0
        u_o = u_o1 * self.r_cp + u_o0
        if fabs(u_i) >= INPLANE_EPS:
            sgn = 1.0 if u_i > 0.0 else -1.0
            self.last_sign_[k] = sgn
            alpha = theta + sgn * 0.5 * PI - atan(u_o / u_i)
        else:
            sgn = self.last_sign_[k]
            alpha = theta + sgn * 0.5 * PI - atan2(u_o, u_i)
        alpha = wrap_angle(alpha)

        a2 = u_i1 * u_i1 + u_o1 * u_o1
        a1 = 2.0 * (u_i1 * u_i0 + u_o1 * u_o0)
        a0 = u_i0 * u_i0 + u_o0 * u_o0

        cn = self._cn(alpha)
        F_N = cn * (self.kF[0] * a2 + self.kF[1] * a1 + self.kF[2] * a0)
        M_aero = -self._dcp(alpha) * cn * (
            self.kM[0] * a2 + self.kM[1] * a1 + self.kM[2] * a0)
        M_rd = -self.k_rd * fabs(dtheta) * dtheta
        couple = fabs(F_N) < COUPLE_EPS
        d_cp = 0.0 if couple else -M_aero / F_N

        load5[0] = F_N
        load5[1] = M_aero
        load5[2] = M_rd
        load5[3] = d_cp
        load5[4] = 1.0 if couple else 0.0
        f2[0] = -F_N
        f2[1] = 0.0
        f2[2] = 0.0
        p2[0] = 0.0
        p2[1] = self.sy[k] * self.r_cp
        p2[2] = -d_cp
        n2[0] = 0.0
        n2[1] = -(M_rd + (M_aero if couple else 0.0))
        n2[2] = 0.0

    cdef void _joint_torques_c(self, double *s, double V_l, double V_r,
                               double *tau) noexcept nogil:
        cdef int k
        cdef double V, psi, theta, dpsi, dtheta, gkt, tau_psi, d
        for k in range(2):
            V = V_l if k == 0 else V_r
            V = clampd(V, -self.supply, self.supply)
            psi = s[IPSI_L + 2 * k]
            theta = s[ITHETA_L + 2 * k]
            dpsi = s[IDPSI_L + 2 * k]
            dtheta = s[IDTHETA_L + 2 * k]
            gkt = self.act_gkt[k]
            tau_psi = gkt * (V - gkt * dpsi) / self.act_Rm[k]
            d = psi - self.act_psi0[k]
            tau_psi -= (self.act_Ksp[k] if d >= 0.0 else self.act_Ksn[k]) * d
            tau_psi += stop_torque(psi, dpsi, -self.act_lim[k],
                                   self.act_lim[k], self.act_k[k],
                                   self.act_c[k])
            tau[2 * k] = tau_psi
            tau[2 * k + 1] = stop_torque(theta, dtheta, self.act_Thn[k],
                                         self.act_Thp[k], self.act_k[k],
                                         self.act_c[k])

    cdef void _stop_damping_c(self, double *s, double *d) noexcept nogil:
        cdef int k
        cdef double psi, theta, dpsi, dtheta
        for k in range(2):
            d[2 * k] = 0.0
            d[2 * k + 1] = 0.0
            psi = s[IPSI_L + 2 * k]
            theta = s[ITHETA_L + 2 * k]
            dpsi = s[IDPSI_L + 2 * k]
            dtheta = s[IDTHETA_L + 2 * k]
            if (psi > self.act_lim[k] and dpsi > 0.0) \
                    or (psi < -self.act_lim[k] and dpsi < 0.0):
                d[2 * k] = self.act_c[k]
            if (theta > self.act_Thp[k] and dtheta > 0.0) \
                    or (theta < self.act_Thn[k] and dtheta < 0.0):
                d[2 * k + 1] = self.act_c[k]

    cdef void _rnea(self, double *s, double *omega0, double *v0,
                    double *alpha0, double *a0, double *qd, double *dd,
                    double *ext, bint has_ext, double *out) noexcept nogil:
        """Inverse dynamics; ext is 18 doubles (f2,p2,n2 per wing) or unused.

        Operation order matches the reference implementation so the wing
        contributions cancel exactly at mirror-symmetric states.
        """
        cdef double F_base[3]
        cdef double N_base[3]
        cdef double tmp[3]
        cdef double tmp2[3]
        cdef double w0l[3]
        cdef double omega1[3]
        cdef double alpha1[3]
        cdef double a_o1[3]
        cdef double w1w[3]
        cdef double omega2[3]
        cdef double alpha2[3]
        cdef double a_o2[3]
        cdef double a_c2[3]
        cdef double F2[3]
        cdef double N2[3]
        cdef double a_c1[3]
        cdef double F1[3]
        cdef double N1[3]
        cdef double Fb[3]
        cdef double Nb[3]
        cdef int k, i
        cdef double sz, psi, theta, dpsi, dtheta, ddpsi, ddtheta
        cdef double c1z, s1z, c2y, s2y

        matvec3(self.I_torso, alpha0, tmp)
        matvec3(self.I_torso, omega0, tmp2)
        cross3(omega0, tmp2, N_base)
        for i in range(3):
            F_base[i] = self.m_torso * a0[i]
            N_base[i] = tmp[i] + N_base[i]

        for k in range(2):
            sz = self.sz[k]
            psi = s[IPSI_L + 2 * k]
            theta = s[ITHETA_L + 2 * k]
            dpsi = qd[2 * k]
            dtheta = qd[2 * k + 1]
            ddpsi = dd[2 * k]
            ddtheta = dd[2 * k + 1]
            c1z = cos(sz * psi)
            s1z = sin(sz * psi)
            # frame 1: leading edge (stroke joint about sz * z)
            rotz_T(c1z, s1z, omega0, w0l)
            omega1[0] = w0l[0]
            omega1[1] = w0l[1]
            omega1[2] = w0l[2] + dpsi * sz
            # alpha1 = R1^T alpha0 + ddpsi*a_s + w0l x (dpsi*a_s)
            rotz_T(c1z, s1z, alpha0, alpha1)
            alpha1[2] = alpha1[2] + ddpsi * sz
            tmp[0] = 0.0
            tmp[1] = 0.0
            tmp[2] = dpsi * sz
            cross3(w0l, tmp, tmp2)
            for i in range(3):
                alpha1[i] = alpha1[i] + tmp2[i]
            # a_o1 = R1^T (a0 + alpha0 x r_s + omega0 x (omega0 x r_s))
            cross3(alpha0, self.r_sh[k], tmp)
            cross3(omega0, self.r_sh[k], tmp2)
            for i in range(3):
                tmp[i] = a0[i] + tmp[i]
            cross3(omega0, tmp2, tmp2)
            for i in range(3):
                tmp[i] = tmp[i] + tmp2[i]
            rotz_T(c1z, s1z, tmp, a_o1)
            # frame 2: wing (rotation joint about -y)
            c2y = cos(-theta)
            s2y = sin(-theta)
            roty_T(c2y, s2y, omega1, w1w)
            omega2[0] = w1w[0]
            omega2[1] = w1w[1] - dtheta
            omega2[2] = w1w[2]
            roty_T(c2y, s2y, alpha1, alpha2)
            alpha2[1] = alpha2[1] - ddtheta
            tmp[0] = 0.0
            tmp[1] = -dtheta
            tmp[2] = 0.0
            cross3(w1w, tmp, tmp2)
            for i in range(3):
                alpha2[i] = alpha2[i] + tmp2[i]
            roty_T(c2y, s2y, a_o1, a_o2)
            # wing body
            cross3(alpha2, self.c_wing_[k], tmp)
            cross3(omega2, self.c_wing_[k], tmp2)
            for i in range(3):
                a_c2[i] = a_o2[i] + tmp[i]
            cross3(omega2, tmp2, tmp2)
            for i in range(3):
                a_c2[i] = a_c2[i] + tmp2[i]
            for i in range(3):
                F2[i] = self.m_wing * a_c2[i]
            matvec3(self.I_wing_[k], alpha2, N2)
            matvec3(self.I_wing_[k], omega2, tmp)
            cross3(omega2, tmp, tmp2)
            for i in range(3):
                N2[i] = N2[i] + tmp2[i]
            cross3(self.c_wing_[k], a_c2, tmp)
            for i in range(3):
                N2[i] = N2[i] + self.m_wing * tmp[i]
            if has_ext:
                for i in range(3):
                    F2[i] = F2[i] - ext[9 * k + i]
                cross3(&ext[9 * k + 3], &ext[9 * k + 0], tmp)
                for i in range(3):
                    N2[i] = N2[i] - ext[9 * k + 6 + i] - tmp[i]
            out[6 + 2 * k + 1] = -N2[1]
            # leading edge body
            cross3(alpha1, self.c_le_[k], tmp)
            cross3(omega1, self.c_le_[k], tmp2)
            for i in range(3):
                a_c1[i] = a_o1[i] + tmp[i]
            cross3(omega1, tmp2, tmp2)
            for i in range(3):
                a_c1[i] = a_c1[i] + tmp2[i]
            roty(c2y, s2y, F2, tmp)
            for i in range(3):
                F1[i] = self.m_le * a_c1[i] + tmp[i]
            matvec3(self.I_le_, alpha1, N1)
            matvec3(self.I_le_, omega1, tmp)
            cross3(omega1, tmp, tmp2)
            for i in range(3):
                N1[i] = N1[i] + tmp2[i]
            cross3(self.c_le_[k], a_c1, tmp)
            for i in range(3):
                N1[i] = N1[i] + self.m_le * tmp[i]
            roty(c2y, s2y, N2, tmp)
            for i in range(3):
                N1[i] = N1[i] + tmp[i]
            out[6 + 2 * k] = sz * N1[2]
            # fold into the base; per-wing sums first so mirror terms cancel
            rotz(c1z, s1z, F1, Fb)
            rotz(c1z, s1z, N1, Nb)
            cross3(self.r_sh[k], Fb, tmp)
            for i in range(3):
                Nb[i] = Nb[i] + tmp[i]
            for i in range(3):
                F_base[i] = F_base[i] + Fb[i]
                N_base[i] = N_base[i] + Nb[i]

        for i in range(3):
            out[i] = F_base[i]
            out[3 + i] = N_base[i]

    cdef void _gravity_body_c(self, double *s, double *g) noexcept nogil:
        cdef double sr, cr, sp, cp
        if not self.gravity_on:
            g[0] = 0.0
            g[1] = 0.0
            g[2] = 0.0
            return
        sr = sin(s[IROLL])
        cr = cos(s[IROLL])
        sp = sin(s[IPITCH])
        cp = cos(s[IPITCH])
        g[0] = C_GRAVITY * sp
        g[1] = -C_GRAVITY * sr * cp
        g[2] = -C_GRAVITY * cr * cp

    cdef void _mass_matrix_c(self, double *s, double *M) noexcept nogil:
        cdef double zero3[3]
        cdef double zero4[4]
        cdef double e10[10]
        cdef double col[10]
        cdef int i, j
        for i in range(3):
            zero3[i] = 0.0
        for i in range(4):
            zero4[i] = 0.0
        for i in range(10):
            for j in range(10):
                e10[j] = 0.0
            e10[i] = 1.0
            self._rnea(s, zero3, zero3, &e10[3], &e10[0], zero4, &e10[6],
                       NULL, False, col)
            for j in range(10):
                M[10 * j + i] = col[j]

    cdef void _bias_c(self, double *s, double *ext, bint has_ext,
                      double *out) noexcept nogil:
        cdef double a0[3]
        cdef double g[3]
        cdef double zero3[3]
        cdef double zero4[4]
        cdef int i
        for i in range(3):
            zero3[i] = 0.0
        for i in range(4):
            zero4[i] = 0.0
        cross3(&s[IP], &s[IU], a0)
        self._gravity_body_c(s, g)
        for i in range(3):
            a0[i] = a0[i] - g[i]
        self._rnea(s, &s[IP], &s[IU], zero3, a0, &s[IDPSI_L], zero4,
                   ext, has_ext, out)

    cdef int _solve10_c(self, double *M, double *rhs, double *x) noexcept nogil:
        """Solve in the symmetric/antisymmetric joint basis (see reference)."""
        cdef double Mp[100]
        cdef double bp[10]
        cdef int i, j, rc
        # base rows
        for i in range(6):
            for j in range(6):
                Mp[10 * i + j] = M[10 * i + j]
            for j in range(2):
                Mp[10 * i + 6 + j] = M[10 * i + 6 + j] + M[10 * i + 8 + j]
                Mp[10 * i + 8 + j] = M[10 * i + 6 + j] - M[10 * i + 8 + j]
            bp[i] = rhs[i]
        # joint rows: rs = left + right, ra = left - right, then columns
        cdef double rs[2][10]
        cdef double ra[2][10]
        for i in range(2):
            for j in range(10):
                rs[i][j] = M[10 * (6 + i) + j] + M[10 * (8 + i) + j]
                ra[i][j] = M[10 * (6 + i) + j] - M[10 * (8 + i) + j]
        for i in range(2):
            for j in range(6):
                Mp[10 * (6 + i) + j] = rs[i][j]
                Mp[10 * (8 + i) + j] = ra[i][j]
            for j in range(2):
                Mp[10 * (6 + i) + 6 + j] = rs[i][6 + j] + rs[i][8 + j]
                Mp[10 * (6 + i) + 8 + j] = rs[i][6 + j] - rs[i][8 + j]
                Mp[10 * (8 + i) + 6 + j] = ra[i][6 + j] + ra[i][8 + j]
                Mp[10 * (8 + i) + 8 + j] = ra[i][6 + j] - ra[i][8 + j]
        for j in range(2):
            bp[6 + j] = rhs[6 + j] + rhs[8 + j]
            bp[8 + j] = rhs[6 + j] - rhs[8 + j]
        rc = lu_solve(Mp, bp, 10)
        if rc != 0:
            return rc
        for i in range(6):
            x[i] = bp[i]
        for j in range(2):
            x[6 + j] = bp[6 + j] + bp[8 + j]
            x[8 + j] = bp[6 + j] - bp[8 + j]
        return 0

    cdef int _accel_c(self, double *s, double *tau, double *ext, bint has_ext,
                      double dt_damp, double *nudot) noexcept nogil:
        """Forward dynamics; dt_damp > 0 folds engaged stop damping into the
        joint diagonal (implicit damping for the stepper)."""
        cdef double M[100]
        cdef double bias[10]
        cdef double rhs[10]
        cdef double damp[4]
        cdef int i
        self._mass_matrix_c(s, M)
        self._bias_c(s, ext, has_ext, bias)
        if dt_damp > 0.0:
            self._stop_damping_c(s, damp)
            for i in range(4):
                M[10 * (6 + i) + 6 + i] += dt_damp * damp[i]
        for i in range(6):
            rhs[i] = -bias[i]
        for i in range(4):
            rhs[6 + i] = tau[i] - bias[6 + i]
        return self._solve10_c(M, rhs, nudot)

    # ------------------------------------------------------------------
    # python-facing API (mirrors PythonEngine)
    # ------------------------------------------------------------------

    def mass_matrix(self, s):
        cdef double[::1] sv = np.ascontiguousarray(s, dtype=np.float64)
        out = np.empty((10, 10))
        cdef double[:, ::1] Mv = out
        self._mass_matrix_c(&sv[0], &Mv[0, 0])
        return out

    def bias_forces(self, s, ext):
        cdef double[::1] sv = np.ascontiguousarray(s, dtype=np.float64)
        cdef double cext[18]
        cdef bint has_ext = ext is not None
        if has_ext:
            _pack_ext(ext, cext)
        out = np.empty(10)
        cdef double[::1] ov = out
        self._bias_c(&sv[0], cext if has_ext else NULL, has_ext, &ov[0])
        return out

    def accel(self, s, joint_tau, ext):
        cdef double[::1] sv = np.ascontiguousarray(s, dtype=np.float64)
        cdef double[::1] tv = np.ascontiguousarray(joint_tau, dtype=np.float64)
        cdef double cext[18]
        cdef bint has_ext = ext is not None
        if has_ext:
            _pack_ext(ext, cext)
        out = np.empty(10)
        cdef double[::1] ov = out
        if self._accel_c(&sv[0], &tv[0], cext if has_ext else NULL, has_ext,
                         0.0, &ov[0]) != 0:
            raise np.linalg.LinAlgError("singular mass matrix")
        return out

    cdef int _step_free_c(self, double *s, double V_l, double V_r, double dt,
                          double *out, double *load_l, double *load_r,
                          double *spec) noexcept nogil:
        cdef double ext[18]
        cdef double tau[4]
        cdef double nudot[10]
        cdef double g[3]
        cdef double tmp[3]
        cdef double f2l[3]
        cdef double f2r[3]
        cdef int i, rc
        cdef double roll, pitch, yaw, sr, cr, sp, cp, sy, cy, tp
        cdef double dr, dp, dy

        self._wing_aero_c(0, s, &s[IP], &s[IU], load_l, &ext[0], &ext[3],
                          &ext[6])
        self._wing_aero_c(1, s, &s[IP], &s[IU], load_r, &ext[9], &ext[12],
                          &ext[15])
        self._joint_torques_c(s, V_l, V_r, tau)
        rc = self._accel_c(s, tau, ext, self.aero_on, dt, nudot)
        if rc != 0:
            return rc

        cross3(&s[IP], &s[IU], tmp)
        self._gravity_body_c(s, g)
        for i in range(3):
            spec[i] = nudot[i] + tmp[i] - g[i]

        for i in range(STATE_DIM):
            out[i] = s[i]
        for i in range(6):
            out[IU + i] = s[IU + i] + dt * nudot[i]
        for i in range(4):
            out[IDPSI_L + i] = s[IDPSI_L + i] + dt * nudot[6 + i]

        roll = s[IROLL]
        pitch = s[IPITCH]
        yaw = s[IYAW]
        sr = sin(roll)
        cr = cos(roll)
        sp = sin(pitch)
        cp = cos(pitch)
        sy = sin(yaw)
        cy = cos(yaw)
        tp = tan(pitch)
        dr = out[IP] + (out[IQ] * sr + out[IR] * cr) * tp
        dp = out[IQ] * cr - out[IR] * sr
        dy = (out[IQ] * sr + out[IR] * cr) / cp
        out[IX] = s[IX] + dt * (cy * cp * out[IU]
                                + (cy * sp * sr - sy * cr) * out[IV]
                                + (cy * sp * cr + sy * sr) * out[IW])
        out[IY] = s[IY] + dt * (sy * cp * out[IU]
                                + (sy * sp * sr + cy * cr) * out[IV]
                                + (sy * sp * cr - cy * sr) * out[IW])
        out[IZ] = s[IZ] + dt * (-sp * out[IU] + cp * sr * out[IV]
                                + cp * cr * out[IW])
        out[IROLL] = roll + dt * dr
        out[IPITCH] = pitch + dt * dp
        out[IYAW] = yaw + dt * dy
        for i in range(4):
            out[IPSI_L + i] = s[IPSI_L + i] + dt * out[IDPSI_L + i]
        out[IT] = s[IT] + dt
        for i in range(STATE_DIM):
            if not isfinite(out[i]):
                return -2
        return 0

    cdef int _step_clamped_c(self, double *s, double V_l, double V_r,
                             double dt, double *out, double *load_l,
                             double *load_r, double *hold) noexcept nogil:
        cdef double ext[18]
        cdef double tau[4]
        cdef double bias[10]
        cdef double zero3[3]
        cdef double zero4[4]
        cdef double e4[4]
        cdef double col[10]
        cdef double M4[16]
        cdef double Mb[24]
        cdef double dd[4]
        cdef double damp[4]
        cdef int i, j, rc

        for i in range(3):
            zero3[i] = 0.0
        for i in range(4):
            zero4[i] = 0.0
        self._wing_aero_c(0, s, zero3, zero3, load_l, &ext[0], &ext[3],
                          &ext[6])
        self._wing_aero_c(1, s, zero3, zero3, load_r, &ext[9], &ext[12],
                          &ext[15])
        self._joint_torques_c(s, V_l, V_r, tau)
        self._bias_c(s, ext, self.aero_on, bias)
        for j in range(4):
            for i in range(4):
                e4[i] = 0.0
            e4[j] = 1.0
            self._rnea(s, zero3, zero3, zero3, zero3, zero4, e4, NULL, False,
                       col)
            for i in range(4):
                M4[4 * i + j] = col[6 + i]
            for i in range(6):
                Mb[4 * i + j] = col[i]
        self._stop_damping_c(s, damp)
        for i in range(4):
            M4[4 * i + i] += dt * damp[i]
            dd[i] = tau[i] - bias[6 + i]
        rc = lu_solve(M4, dd, 4)
        if rc != 0:
            return rc
        for i in range(6):
            hold[i] = bias[i] + (Mb[4 * i + 0] * dd[0] + Mb[4 * i + 1] * dd[1]
                                 + Mb[4 * i + 2] * dd[2]
                                 + Mb[4 * i + 3] * dd[3])
        for i in range(STATE_DIM):
            out[i] = s[i]
        for i in range(4):
            out[IDPSI_L + i] = s[IDPSI_L + i] + dt * dd[i]
            out[IPSI_L + i] = s[IPSI_L + i] + dt * out[IDPSI_L + i]
        out[IT] = s[IT] + dt
        for i in range(STATE_DIM):
            if not isfinite(out[i]):
                return -2
        return 0

    def step_free(self, s, V_l, V_r, dt):
        """One semi-implicit Euler step of the free-flying vehicle.

        Returns (new_state, load_l, load_r, specific_force).
        """
        cdef double[::1] sv = np.ascontiguousarray(s, dtype=np.float64)
        out = np.empty(STATE_DIM)
        spec = np.empty(3)
        cdef double[::1] ov = out
        cdef double[::1] pv = spec
        cdef double ll[5]
        cdef double lr[5]
        cdef int rc = self._step_free_c(&sv[0], V_l, V_r, dt, &ov[0], ll, lr,
                                        &pv[0])
        if rc == -2:
            raise IntegrationDivergedError(
                "integration diverged at t=%.6f" % sv[IT],
                np.asarray(sv).copy())
        if rc != 0:
            raise np.linalg.LinAlgError("singular mass matrix")
        return out, self._load(ll), self._load(lr), spec

    def step_clamped(self, s, V_l, V_r, dt):
        """One step with the six body DOFs locked (force-stand emulation).

        Returns (new_state, load_l, load_r, hold_wrench).
        """
        cdef double[::1] sv = np.ascontiguousarray(s, dtype=np.float64)
        out = np.empty(STATE_DIM)
        hold = np.empty(6)
        cdef double[::1] ov = out
        cdef double[::1] hv = hold
        cdef double ll[5]
        cdef double lr[5]
        cdef int rc = self._step_clamped_c(&sv[0], V_l, V_r, dt, &ov[0], ll,
                                           lr, &hv[0])
        if rc == -2:
            raise IntegrationDivergedError(
                "integration diverged at t=%.6f" % sv[IT],
                np.asarray(sv).copy())
        if rc != 0:
            raise np.linalg.LinAlgError("singular joint inertia block")
        return out, self._load(ll), self._load(lr), hold

    def static_hold_wrench(self, s):
        """Clamp wrench with all rates and accelerations zero (tare reading)."""
        return self.bias_forces(s, None)[0:6]

    cdef object _load(self, double *l5):
        return AeroLoad(F_N=l5[0], M_aero=l5[1], M_rd=l5[2], r_cp=self.r_cp,
                        d_cp=l5[3], couple=l5[4] != 0.0)

    # ------------------------------------------------------------------
    # whole-loop fast paths
    # ------------------------------------------------------------------

    def run_open_loop(self, s, cmd, double f, double dt, int n_steps,
                      clamped=False):
        """Integrate n_steps under a fixed wingbeat-modulation command,
        entirely in C. Returns the final state array.

        ``cmd`` is (V_amp, V_d, V_0, delta_sigma).
        """
        cdef double[::1] sv = np.ascontiguousarray(s, dtype=np.float64).copy()
        cdef double buf[21]
        cdef double ll[5]
        cdef double lr[5]
        cdef double aux[6]
        cdef double V_amp = cmd[0], V_d = cmd[1], V_0 = cmd[2], dsig = cmd[3]
        cdef double V_l, V_r, tau
        cdef bint do_clamp = bool(clamped)
        cdef int i, j, rc = 0
        cdef double *cur = &sv[0]
        if fabs(dsig) >= 0.5:
            raise ValueError("|delta_sigma| must be < 0.5")
        with nogil:
            for i in range(n_steps):
                tau = cur[IT] * f - floor(cur[IT] * f)
                V_l = (V_amp - V_d) * _split_cycle(tau, dsig) + V_0
                V_r = (V_amp + V_d) * _split_cycle(tau, -dsig) + V_0
                if do_clamp:
                    rc = self._step_clamped_c(cur, V_l, V_r, dt, buf, ll, lr,
                                              aux)
                else:
                    rc = self._step_free_c(cur, V_l, V_r, dt, buf, ll, lr,
                                           aux)
                if rc != 0:
                    break
                for j in range(STATE_DIM):
                    cur[j] = buf[j]
        if rc == -2:
            raise IntegrationDivergedError(
                "integration diverged at t=%.6f" % sv[IT],
                np.asarray(sv).copy())
        if rc != 0:
            raise np.linalg.LinAlgError("singular system in open-loop run")
        return np.asarray(sv)

    def clamped_cycle_average(self, s, cmd, double f, double dt,
                              int n_startup, int n_avg):
        """Clamped run under a fixed command; per-wingbeat mean hold wrench.

        Integrates n_startup + n_avg wingbeats with the body locked and
        returns (cycle_means, final_state) where cycle_means has shape
        (n_avg, 6) and holds the negated mean hold wrench (the load the
        vehicle applies to the stand) for each averaging wingbeat, without
        tare subtraction.
        """
        cdef double[::1] sv = np.ascontiguousarray(s, dtype=np.float64).copy()
        cdef double buf[21]
        cdef double ll[5]
        cdef double lr[5]
        cdef double hold[6]
        cdef double V_amp = cmd[0], V_d = cmd[1], V_0 = cmd[2], dsig = cmd[3]
        cdef double V_l, V_r, tau, t0, trel
        cdef int i, j, c, rc = 0, n_steps
        cdef double *cur = &sv[0]
        if fabs(dsig) >= 0.5:
            raise ValueError("|delta_sigma| must be < 0.5")
        means = np.zeros((n_avg, 6))
        counts = np.zeros(n_avg)
        cdef double[:, ::1] mv = means
        cdef double[::1] cv = counts
        n_steps = <int>(floor((n_startup + n_avg) / (f * dt) + 0.5))
        t0 = sv[IT]
        with nogil:
            for i in range(n_steps):
                tau = cur[IT] * f - floor(cur[IT] * f)
                V_l = (V_amp - V_d) * _split_cycle(tau, dsig) + V_0
                V_r = (V_amp + V_d) * _split_cycle(tau, -dsig) + V_0
                rc = self._step_clamped_c(cur, V_l, V_r, dt, buf, ll, lr,
                                          hold)
                if rc != 0:
                    break
                trel = (cur[IT] - t0) * f
                c = <int>floor(trel) - n_startup
                if 0 <= c < n_avg:
                    for j in range(6):
                        mv[c, j] += -hold[j]
                    cv[c] += 1.0
                for j in range(STATE_DIM):
                    cur[j] = buf[j]
        if rc == -2:
            raise IntegrationDivergedError(
                "integration diverged at t=%.6f" % sv[IT],
                np.asarray(sv).copy())
        if rc != 0:
            raise np.linalg.LinAlgError("singular system in clamped run")
        means /= counts[:, None]
        return means, np.asarray(sv)


cdef double _split_cycle(double tau, double dsig) noexcept nogil:
    cdef double d1 = 0.5 - dsig
    cdef double d2 = 0.5 + dsig
    if tau < d1:
        return sin(PI * tau / d1)
    return -(d1 / d2) * sin(PI * (tau - d1) / d2)


cdef void _pack_ext(object ext, double *cext):
    cdef int k, i
    for k in range(2):
        w = ext[k]
        if w is None:
            for i in range(9):
                cext[9 * k + i] = 0.0
            continue
        f2, p2, n2 = w
        for i in range(3):
            cext[9 * k + i] = f2[i]
            cext[9 * k + 3 + i] = p2[i]
            cext[9 * k + 6 + i] = n2[i]
