"""Compiled vs pure-Python engine agreement, and the exact left/right
symmetry of the vehicle model.

Trajectory comparisons are short-horizon: the stiff rotation-stop contacts
make long rollouts chaotic, so bitwise agreement is only meaningful over
hundreds of steps (see the benchmark for long-horizon statistics)."""

import numpy as np
import pytest

from fwmav.dynamics import DEFAULT_DT, hover_state
from fwmav.engine import available_backends, default_backend, make_engine
from fwmav.params import ControlInput

ASYM_CMD = (7.0, 0.5, 0.3, 0.05)
SYM_CMD = (8.0, 0.0, 0.0, 0.0)

LATERAL_IDX = [1, 3, 5, 7, 9, 11]   # y, roll, yaw, v, p, r


def test_cython_backend_available():
    # the compiled core must be importable in this build
    assert "cython" in available_backends()
    assert "python" in available_backends()
    assert default_backend() in available_backends()


@pytest.mark.skipif(len(available_backends()) < 2,
                    reason="needs both backends")
def test_single_step_parity(vehicle):
    ep = make_engine(vehicle, "python")
    ec = make_engine(vehicle, "cython")
    rng = np.random.default_rng(5)
    for _ in range(10):
        s = hover_state(vehicle).to_array()
        s[6:12] = 0.3 * rng.normal(size=6)
        s[12:16] = 0.4 * rng.normal(size=4)
        s[16:20] = 30.0 * rng.normal(size=4)
        ep.reset_aero_state()
        ec.reset_aero_state()
        a = ep.run_open_loop(s.copy(), ASYM_CMD, vehicle.flap_frequency,
                             DEFAULT_DT, 1)
        b = ec.run_open_loop(s.copy(), ASYM_CMD, vehicle.flap_frequency,
                             DEFAULT_DT, 1)
        assert np.max(np.abs(a - b)) < 1e-12


@pytest.mark.skipif(len(available_backends()) < 2,
                    reason="needs both backends")
def test_free_rollout_parity_100_steps(vehicle):
    ep = make_engine(vehicle, "python")
    ec = make_engine(vehicle, "cython")
    s = hover_state(vehicle).to_array()
    a = ep.run_open_loop(s.copy(), ASYM_CMD, vehicle.flap_frequency,
                         DEFAULT_DT, 100)
    b = ec.run_open_loop(s.copy(), ASYM_CMD, vehicle.flap_frequency,
                         DEFAULT_DT, 100)
    assert np.max(np.abs(a - b)) < 1e-9


@pytest.mark.skipif(len(available_backends()) < 2,
                    reason="needs both backends")
def test_clamped_rollout_parity(vehicle):
    ep = make_engine(vehicle, "python")
    ec = make_engine(vehicle, "cython")
    s = hover_state(vehicle).to_array()
    a = ep.run_open_loop(s.copy(), ASYM_CMD, vehicle.flap_frequency,
                         DEFAULT_DT, 200, clamped=True)
    b = ec.run_open_loop(s.copy(), ASYM_CMD, vehicle.flap_frequency,
                         DEFAULT_DT, 200, clamped=True)
    assert np.max(np.abs(a - b)) < 1e-9


def test_run_open_loop_matches_manual_stepping(vehicle, backend):
    eng = make_engine(vehicle, backend)
    s = hover_state(vehicle).to_array()
    eng.reset_aero_state()
    a = eng.run_open_loop(s.copy(), ASYM_CMD, vehicle.flap_frequency,
                          DEFAULT_DT, 50)
    eng.reset_aero_state()
    b = s.copy()
    for _ in range(50):
        b = eng.run_open_loop(b, ASYM_CMD, vehicle.flap_frequency,
                              DEFAULT_DT, 1)
    np.testing.assert_array_equal(a, b)


def test_mirror_symmetry_exact(vehicle, backend):
    """A symmetric command from a symmetric state keeps every lateral body
    state and the left/right wing difference exactly zero, bitwise."""
    eng = make_engine(vehicle, backend)
    n = 3000 if backend == "cython" else 400
    s = hover_state(vehicle).to_array()
    for _ in range(n // 100):
        s = eng.run_open_loop(s, SYM_CMD, vehicle.flap_frequency,
                              DEFAULT_DT, 100)
        assert all(s[i] == 0.0 for i in LATERAL_IDX)
        assert s[12] == s[14] and s[13] == s[15]
        assert s[16] == s[18] and s[17] == s[19]


def test_symmetric_cycle_average_torques(vehicle):
    # clamped cycle averages of roll and yaw torque vanish by symmetry
    eng = make_engine(vehicle, "cython")
    s = hover_state(vehicle).to_array()
    means, _ = eng.clamped_cycle_average(s, SYM_CMD, vehicle.flap_frequency,
                                         DEFAULT_DT, 5, 10)
    avg = means.mean(axis=0)
    assert abs(avg[3]) < 1e-5   # Mx
    assert abs(avg[5]) < 1e-5   # Mz
    assert abs(avg[1]) < 1e-5   # Fy


def test_symmetric_free_flight_no_lateral_drift(vehicle):
    eng = make_engine(vehicle, "cython")
    f = vehicle.flap_frequency
    n_beat = int(round(1.0 / (f * DEFAULT_DT)))
    s = hover_state(vehicle).to_array()
    s = eng.run_open_loop(s, SYM_CMD, f, DEFAULT_DT, 10 * n_beat)
    assert abs(s[1]) < 1e-9     # y
    assert abs(s[3]) < 1e-9     # roll
    assert abs(s[5]) < 1e-9     # yaw


def test_static_hold_wrench(vehicle, backend):
    eng = make_engine(vehicle, backend)
    w = eng.static_hold_wrench(hover_state(vehicle).to_array())
    weight = vehicle.morphology.mass_total * 9.81
    assert w[2] == pytest.approx(weight, rel=1e-12)
    assert np.max(np.abs(w[[0, 1, 3, 4, 5]])) < 1e-12


def test_clamped_average_at_zero_voltage(vehicle):
    # motor shorted at V=0 damps the wings to rest; the average hold is
    # then just the weight (its negative appears in the reported mean)
    eng = make_engine(vehicle, "cython")
    s = hover_state(vehicle).to_array()
    means, _ = eng.clamped_cycle_average(s, (0.0, 0.0, 0.0, 0.0),
                                         vehicle.flap_frequency,
                                         DEFAULT_DT, 10, 5)
    avg = means.mean(axis=0)
    weight = vehicle.morphology.mass_total * 9.81
    assert avg[2] == pytest.approx(-weight, abs=1e-6)
    assert np.max(np.abs(avg[[0, 1, 3, 4, 5]])) < 1e-6


def test_make_engine_rejects_unknown_backend(vehicle):
    with pytest.raises(ValueError):
        make_engine(vehicle, "fortran")


def test_control_input_array_order():
    cmd = ControlInput(V_amp=1.0, V_d=2.0, V_0=3.0, delta_sigma=0.1)
    np.testing.assert_array_equal(cmd.to_array(), [1.0, 2.0, 3.0, 0.1])
