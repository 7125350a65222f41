"""Config serialization round-trips and parameter validation."""

import math
from dataclasses import replace

import numpy as np
import pytest

from fwmav.config import (default_chord_profile, dumps_toml, load_config,
                          reference_vehicle, save_config, vehicle_from_dict,
                          vehicle_to_dict)
from fwmav.params import (ControlInput, MissingFieldError, Morphology,
                          SimState, ValidationError, WingShape,
                          chord_profile_moments)


def assert_same_vehicle(a, b):
    assert a.flap_frequency == b.flap_frequency
    assert a.aero == b.aero
    assert a.actuator == b.actuator
    for f in ("wingspan", "mass_total", "d_s", "d_0", "wing_mass",
              "leading_edge_mass", "wing_inertia_about_joint"):
        assert getattr(a.morphology, f) == getattr(b.morphology, f)
    np.testing.assert_array_equal(np.asarray(a.morphology.body_inertia),
                                  np.asarray(b.morphology.body_inertia))
    np.testing.assert_array_equal(a.wing.chord_profile, b.wing.chord_profile)
    for name in ("R_w", "c_bar", "r_hat_00", "r_hat_11", "r_hat_22",
                 "r_hat_33", "z_hat_cp0", "z_hat_cp1", "z_hat_cp2",
                 "z_hat_rd"):
        assert getattr(a.wing, name) == getattr(b.wing, name)


def test_toml_roundtrip_exact(vehicle, tmp_path):
    path = tmp_path / "veh.toml"
    save_config(vehicle, path)
    # repr-precision floats make the round trip bit-exact
    assert_same_vehicle(load_config(path), vehicle)


def test_dict_roundtrip(vehicle):
    assert_same_vehicle(vehicle_from_dict(vehicle_to_dict(vehicle)), vehicle)


def test_missing_section_raises(vehicle):
    doc = vehicle_to_dict(vehicle)
    del doc["aero"]
    with pytest.raises(MissingFieldError):
        vehicle_from_dict(doc)


def test_missing_field_raises(vehicle):
    doc = vehicle_to_dict(vehicle)
    del doc["morphology"]["wing_mass"]
    with pytest.raises(MissingFieldError):
        vehicle_from_dict(doc)
    doc = vehicle_to_dict(vehicle)
    del doc["actuator"]["left"]
    with pytest.raises(MissingFieldError):
        vehicle_from_dict(doc)


def test_tampered_moment_rejected(vehicle):
    # stored shape moments must agree with the tabulated profile
    doc = vehicle_to_dict(vehicle)
    doc["wing"]["r_hat_22"] *= 1.01
    with pytest.raises(ValidationError):
        vehicle_from_dict(doc)


def test_default_profile_zeroth_moment_is_one():
    c = default_chord_profile()
    assert len(c) == 65
    assert abs(chord_profile_moments(c)[0] - 1.0) < 1e-14


def test_profile_moments_exact_for_linear_profile():
    # piecewise-linear c(r) = r has exact polynomial moments
    r = np.linspace(0.0, 1.0, 9)
    m = chord_profile_moments(r)
    # int r^k * r dr = 1/(k+2)
    for k in range(4):
        assert abs(m[k] - 1.0 / (k + 2)) < 1e-14


def test_morphology_mass_budget():
    m = reference_vehicle().morphology
    with pytest.raises(ValidationError):
        Morphology(wingspan=m.wingspan, mass_total=8e-4, d_s=m.d_s, d_0=m.d_0,
                   body_inertia=np.asarray(m.body_inertia),
                   wing_mass=m.wing_mass,
                   leading_edge_mass=m.leading_edge_mass,
                   wing_inertia_about_joint=m.wing_inertia_about_joint)


def test_body_inertia_must_be_spd():
    m = reference_vehicle().morphology
    with pytest.raises(ValidationError):
        Morphology(wingspan=m.wingspan, mass_total=m.mass_total,
                   d_s=m.d_s, d_0=m.d_0,
                   body_inertia=np.diag([1e-5, -1e-5, 2e-6]),
                   wing_mass=m.wing_mass,
                   leading_edge_mass=m.leading_edge_mass,
                   wing_inertia_about_joint=m.wing_inertia_about_joint)


def test_torso_mass_property(vehicle):
    m = vehicle.morphology
    expect = m.mass_total - 2.0 * (m.wing_mass + m.leading_edge_mass)
    assert abs(m.torso_mass - expect) < 1e-18


def test_wing_area(vehicle):
    w = vehicle.wing
    # zeroth moment is 1 by construction, so area = R_w * c_bar
    assert abs(w.area - w.R_w * w.c_bar) < 1e-12


def test_actuator_validation(vehicle):
    a = vehicle.actuator.left
    with pytest.raises(ValidationError):
        replace(a, Theta_pos=-0.1)
    with pytest.raises(ValidationError):
        replace(a, R_m=0.0)


def test_control_input_validation(vehicle):
    supply = vehicle.actuator.supply_voltage
    ControlInput(V_amp=10.0, V_d=2.0, V_0=2.0).validate(supply)
    with pytest.raises(ValidationError):
        ControlInput(V_amp=15.0, V_d=2.0).validate(supply)
    with pytest.raises(ValidationError):
        ControlInput(V_amp=5.0, delta_sigma=0.5).validate(supply)


def test_sim_state_array_roundtrip():
    vals = np.arange(21, dtype=float)
    s = SimState.from_array(vals)
    np.testing.assert_array_equal(s.to_array(), vals)
    assert s.is_finite()
    bad = vals.copy()
    bad[5] = np.nan
    assert not SimState.from_array(bad).is_finite()


def test_sysid_vector_roundtrip(vehicle):
    x = vehicle.sysid_vector()
    assert x.shape == (12,)
    y = x.copy()
    y[0] *= 1.1
    y[8] = 0.7
    p2 = vehicle.with_sysid_vector(y)
    np.testing.assert_allclose(p2.sysid_vector(), y, rtol=0, atol=0)
    assert p2.actuator.left.R_m == pytest.approx(x[0] * 1.1)
    # untouched sections are shared unchanged
    assert p2.wing == vehicle.wing
    assert p2.aero == vehicle.aero


def test_dumps_toml_rejects_unknown_type():
    with pytest.raises(TypeError):
        dumps_toml({"a": {"b": object()}})


def test_overrides_kwarg():
    p = reference_vehicle(flap_frequency=30.0)
    assert p.flap_frequency == 30.0
