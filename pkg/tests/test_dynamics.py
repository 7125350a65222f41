"""Time integration: determinism, conservation laws, convergence under
time-step refinement, stop behavior and failure modes.

Conservation tests use the kinematic oracles in _oracles.py (momentum and
energy built directly from the multibody geometry). Tests marked
xfail(strict=True) document criteria the stiff penalty-stop contact model
cannot meet at the nominal step size; each has a green companion pinning
the convergent behavior in the smooth regime."""

import math
from dataclasses import replace

import numpy as np
import pytest

from fwmav.dynamics import (DEFAULT_DT, GeneralizedState,
                            IntegrationDivergedError, forward_dynamics,
                            hover_state, resonant_frequency, simulate, step,
                            stroke_inertia)
from fwmav.engine import make_engine
from fwmav.params import ControlInput, SimState
from fwmav.trajlog import TrajectoryLog

from _oracles import (mechanical_energy, reference_engine, system_com,
                      world_momentum)

GRAV = 9.81
BODY_IDX = list(range(12))


def motor_open(params):
    """Open-circuit both motors so zero command means zero stroke torque."""
    act = params.actuator

    def mod(side):
        return replace(side, R_m=1e12)

    return replace(params, actuator=replace(act, left=mod(act.left),
                                            right=mod(act.right)))


def rollout(eng, s, cmd, f, dt, n):
    return eng.run_open_loop(np.asarray(s, dtype=float), cmd, f, dt, n)


def test_step_deterministic(vehicle, backend):
    eng = make_engine(vehicle, backend)
    cmd = ControlInput(V_amp=7.0, V_d=0.4, V_0=0.2, delta_sigma=0.05)
    s0 = hover_state(vehicle)
    runs = []
    for _ in range(2):
        eng.reset_aero_state()
        s = s0
        for _ in range(50):
            s = step(s, cmd, vehicle, engine=eng)
        runs.append(s.to_array())
    np.testing.assert_array_equal(runs[0], runs[1])


def test_long_free_flight_stays_finite(vehicle):
    eng = make_engine(vehicle, "cython")
    s = hover_state(vehicle).to_array()
    out = rollout(eng, s, (8.0, 0.0, 0.0, 0.0), vehicle.flap_frequency,
                  DEFAULT_DT, 10000)
    assert np.all(np.isfinite(out))
    assert abs(out[2]) < 5.0   # did not fly off to absurd altitude in 1 s


def test_thrust_increases_with_voltage(vehicle):
    eng = make_engine(vehicle, "cython")
    s = hover_state(vehicle).to_array()
    fz = []
    for V in (6.0, 8.0, 10.0):
        means, _ = eng.clamped_cycle_average(s, (V, 0.0, 0.0, 0.0),
                                             vehicle.flap_frequency,
                                             DEFAULT_DT, 10, 20)
        fz.append(np.mean(means[:, 2]))
    # the raw average includes the static gravity hold, so its z component
    # is thrust minus weight: negative when the vehicle cannot lift itself
    assert fz[0] < fz[1] < fz[2]
    assert fz[2] > 0.0              # 10 V lifts the 12 g vehicle
    assert fz[0] < 0.0              # 6 V does not


def test_resonant_frequency_against_measured_period(vehicle):
    # free small oscillation of the stroke spring with the motor
    # open-circuited; count psi zero crossings over ~6 cycles. The formula
    # assumes the wing hangs rigidly, so pin the passive rotation with
    # narrow stiff stops (a freely pivoting wing shifts the coupled mode
    # up to ~43 Hz)
    p = motor_open(vehicle)
    act = p.actuator

    def pin(side):
        return replace(side, Theta_pos=1e-6, Theta_neg=-1e-6,
                       stop_stiffness=100.0, stop_damping=0.05)

    p = replace(p, actuator=replace(act, left=pin(act.left),
                                    right=pin(act.right)))
    eng = make_engine(p, "cython", gravity=False, aero=False)
    f_pred = resonant_frequency(p)
    dt = 1e-5
    s = hover_state(p, psi_l=0.05, psi_r=0.05).to_array()
    n = int(round(6.0 / (f_pred * dt)))
    crossings = []
    prev = s[12]
    for i in range(n):
        s = eng.run_open_loop(s, (0.0, 0.0, 0.0, 0.0), p.flap_frequency,
                              dt, 1, clamped=True)
        if prev > 0.0 >= s[12]:
            crossings.append(s[20])
        prev = s[12]
    assert len(crossings) >= 4
    period = np.mean(np.diff(crossings))
    f_meas = 1.0 / period
    assert f_meas == pytest.approx(f_pred, rel=0.02)
    assert f_pred == pytest.approx(
        math.sqrt(0.5 * (p.actuator.left.K_s_pos + p.actuator.left.K_s_neg)
                  / stroke_inertia(p)) / (2.0 * math.pi))


def test_free_fall_center_of_mass(vehicle):
    # internal joint torques cannot accelerate the CoM: projectile motion
    p = motor_open(vehicle)
    eng = make_engine(p, "cython", gravity=True, aero=False)
    ref = reference_engine(p, gravity=True, aero=False)
    s0 = hover_state(p, psi_l=0.3, psi_r=0.3).to_array()
    c0 = system_com(ref, s0)
    t_end = 0.2
    n = int(round(t_end / DEFAULT_DT))
    s = rollout(eng, s0, (0.0, 0.0, 0.0, 0.0), p.flap_frequency,
                DEFAULT_DT, n)
    c1 = system_com(ref, s)
    drop = c1[2] - c0[2]
    # first-order integrator: O(g*t*dt) discrepancy from -g t^2 / 2, and
    # the swinging wings leave a sub-mm discrete momentum residual
    assert drop == pytest.approx(-0.5 * GRAV * t_end**2, abs=2e-4)
    assert abs(c1[0] - c0[0]) < 5e-4
    assert abs(c1[1] - c0[1]) < 5e-4


def test_momentum_conservation_smooth_regime(vehicle):
    # gravity and aero off: total linear momentum is a first integral.
    # At V_amp = 1 the wings stay off their rotation stops and the
    # semi-implicit integrator holds it to a few 1e-5 kg m/s per 100
    # wingbeats, improving ~25x when dt drops 10x.
    eng = make_engine(vehicle, "cython", gravity=False, aero=False)
    ref = reference_engine(vehicle, gravity=False, aero=False)
    f = vehicle.flap_frequency
    s0 = hover_state(vehicle).to_array()
    n_beat = int(round(1.0 / (f * DEFAULT_DT)))
    s = rollout(eng, s0, (1.0, 0.0, 0.0, 0.0), f, DEFAULT_DT, 100 * n_beat)
    drift = np.linalg.norm(world_momentum(ref, s) - world_momentum(ref, s0))
    assert drift < 2e-4
    # refinement: 20 wingbeats at dt/10 an order of magnitude tighter
    s = rollout(eng, s0, (1.0, 0.0, 0.0, 0.0), f, DEFAULT_DT / 10.0,
                20 * 10 * n_beat)
    drift_fine = np.linalg.norm(world_momentum(ref, s) - world_momentum(ref, s0))
    assert drift_fine < 5e-6


@pytest.mark.xfail(strict=True,
                   reason="first-order integrator cannot hold momentum to "
                          "1e-8 over 100 wingbeats at the nominal step")
def test_momentum_conservation_strict(vehicle):
    eng = make_engine(vehicle, "cython", gravity=False, aero=False)
    ref = reference_engine(vehicle, gravity=False, aero=False)
    f = vehicle.flap_frequency
    s0 = hover_state(vehicle).to_array()
    n_beat = int(round(1.0 / (f * DEFAULT_DT)))
    s = rollout(eng, s0, (1.0, 0.0, 0.0, 0.0), f, DEFAULT_DT, 100 * n_beat)
    drift = np.linalg.norm(world_momentum(ref, s) - world_momentum(ref, s0))
    assert drift < 1e-8


def _dt_halving_errors(vehicle, v_amp, n_states, n_pre_beats=1,
                       gravity=True):
    """Per-body-state error of one wingbeat at dt vs dt/2, normalized by the
    within-wingbeat range of that state. Returns (n_states, 12) array."""
    eng = make_engine(vehicle, "cython", gravity=gravity)
    f = vehicle.flap_frequency
    n_beat = int(round(1.0 / (f * DEFAULT_DT)))
    cmd = (v_amp, 0.0, 0.0, 0.0)
    s = hover_state(vehicle).to_array()
    s = rollout(eng, s, cmd, f, DEFAULT_DT, n_pre_beats * n_beat)
    errs = np.empty((n_states, 12))
    for i in range(n_states):
        traj = np.empty((n_beat + 1, 12))
        traj[0] = s[:12]
        sc = s.copy()
        for j in range(n_beat):
            sc = rollout(eng, sc, cmd, f, DEFAULT_DT, 1)
            traj[j + 1] = sc[:12]
        s_half = rollout(eng, s.copy(), cmd, f, 0.5 * DEFAULT_DT, 2 * n_beat)
        rng = traj.max(axis=0) - traj.min(axis=0)
        rng = np.maximum(rng, 1e-12)
        errs[i] = np.abs(sc[:12] - s_half[:12]) / rng
        s = rollout(eng, sc, cmd, f, DEFAULT_DT, n_beat)  # next sample state
    return errs


def test_dt_halving_smooth_regime(vehicle):
    # stop-free stroke amplitude: halving dt moves every body state by
    # less than 1% of its within-wingbeat range. Limited to the first 8
    # wingbeats of the descent; beyond that the accumulated fall speed
    # starts pushing the passive rotation onto its stops.
    errs = _dt_halving_errors(vehicle, v_amp=1.0, n_states=8)
    assert errs.max() < 0.01, f"worst normalized error {errs.max():.4f}"


@pytest.mark.xfail(strict=True,
                   reason="rotation-stop impacts at flight amplitudes make "
                          "the one-wingbeat map non-convergent in dt")
def test_dt_halving_flight_regime(vehicle):
    errs = _dt_halving_errors(vehicle, v_amp=8.0, n_states=10, n_pre_beats=3)
    assert errs.max() < 0.01


def _spring_energy_drift(params, dt, n_cycles, psi_amp=0.4,
                         theta_stops_off=False):
    p = motor_open(params)
    if theta_stops_off:
        act = p.actuator

        def widen(side):
            return replace(side, Theta_pos=1e6, Theta_neg=-1e6)

        p = replace(p, actuator=replace(act, left=widen(act.left),
                                        right=widen(act.right)))
    eng = make_engine(p, "cython", gravity=False, aero=False)
    ref = reference_engine(p, gravity=False, aero=False)
    f_res = resonant_frequency(p)
    n_per = int(round(1.0 / (f_res * dt)))
    s = hover_state(p, psi_l=psi_amp, psi_r=psi_amp).to_array()
    e0 = mechanical_energy(ref, s)
    s = eng.run_open_loop(s, (0.0, 0.0, 0.0, 0.0), p.flap_frequency, dt,
                          n_per * n_cycles, clamped=True)
    return (mechanical_energy(ref, s) - e0) / e0


@pytest.mark.xfail(strict=True,
                   reason="undamped passive rotation pumps onto the "
                          "dissipative stops; 0.1%/100 cycles unattainable "
                          "at the nominal step")
def test_spring_energy_invariant_strict(vehicle):
    drift = _spring_energy_drift(vehicle, DEFAULT_DT, 100)
    assert abs(drift) < 1e-3


def test_spring_energy_back_emf_drain(vehicle):
    # zero VOLTAGE is not zero motor torque: the shorted armature damps
    # the stroke with c = (G K_t)^2 / R_m and drains nearly everything
    eng = make_engine(vehicle, "cython", gravity=False, aero=False)
    ref = reference_engine(vehicle, gravity=False, aero=False)
    f_res = resonant_frequency(vehicle)
    n_per = int(round(1.0 / (f_res * DEFAULT_DT)))
    s = hover_state(vehicle, psi_l=0.4, psi_r=0.4).to_array()
    e0 = mechanical_energy(ref, s)
    s = eng.run_open_loop(s, (0.0, 0.0, 0.0, 0.0), vehicle.flap_frequency,
                          DEFAULT_DT, n_per * 100, clamped=True)
    assert mechanical_energy(ref, s) < 0.01 * e0


def test_spring_energy_converges_with_dt(vehicle):
    # with the motor open and the stops out of reach the continuous
    # dynamics conserve energy: the integrator drift shrinks with dt
    drifts = [abs(_spring_energy_drift(vehicle, dt, 100,
                                       theta_stops_off=True))
              for dt in (1e-4, 1e-5, 1e-6)]
    assert drifts[0] > drifts[1] > drifts[2]
    assert drifts[2] < 0.01


def test_stop_restitution_not_energizing(vehicle):
    # a wing slammed into its rotation stop rebounds no faster than it hit
    p = motor_open(vehicle)
    eng = make_engine(p, "cython", gravity=False, aero=False)
    s = hover_state(p).to_array()
    s[13] = 0.80
    s[17] = 40.0
    v_in = s[17]
    rebound = None
    for _ in range(2000):
        s = eng.run_open_loop(s, (0.0, 0.0, 0.0, 0.0), p.flap_frequency,
                              DEFAULT_DT, 1, clamped=True)
        if s[13] < 0.80 and s[17] < 0.0:
            rebound = -s[17]
            break
    assert rebound is not None
    assert rebound <= v_in * (1.0 + 1e-9)


def test_integration_diverged_error(vehicle):
    eng = make_engine(vehicle, "cython")
    s = hover_state(vehicle, u=1e300).to_array()
    with pytest.raises(IntegrationDivergedError) as ei:
        eng.run_open_loop(s, (8.0, 0.0, 0.0, 0.0), vehicle.flap_frequency,
                          DEFAULT_DT, 10)
    assert hasattr(ei.value, "last_state")


def test_simulate_logging_and_callable_input(vehicle):
    def src(t, state):
        return ControlInput(V_amp=6.0 if t < 0.01 else 7.0)

    log = simulate(hover_state(vehicle), src, 0.02, vehicle)
    arr = log.as_array()
    assert arr.shape[0] == int(round(0.02 / DEFAULT_DT))
    t = log.column("t")
    assert np.all(np.diff(t) > 0)
    assert t[-1] == pytest.approx(0.02, abs=1e-9)
    v_amp = log.column("V_amp")
    assert v_amp[0] == 6.0 and v_amp[-1] == 7.0


def test_simulate_validates_duration(vehicle):
    with pytest.raises(ValueError):
        simulate(hover_state(vehicle), ControlInput(V_amp=5.0), -1.0, vehicle)


def test_forward_dynamics_accel_gravity(vehicle):
    # at rest with no torques and no aero, the base accelerates at -g
    gs = GeneralizedState.from_sim_state(hover_state(vehicle))
    nudot = forward_dynamics(gs, np.zeros(4), None, vehicle)
    assert nudot.shape == (10,)
    assert nudot[2] == pytest.approx(-GRAV, rel=1e-9)
    assert np.max(np.abs(nudot[[0, 1, 3, 4, 5]])) < 1e-9


def test_hover_state_overrides(vehicle):
    s = hover_state(vehicle, z=0.4, yaw=0.3)
    assert s.z == 0.4 and s.yaw == 0.3
    assert s.psi_l == vehicle.actuator.left.psi0


def test_step_rejects_bad_dt(vehicle):
    with pytest.raises(ValueError):
        step(hover_state(vehicle), ControlInput(V_amp=5.0), vehicle, dt=0.0)
