"""Vehicle configuration files (TOML, SI units).

One file fully defines a vehicle. ``load_config`` -> VehicleParams with all
invariants validated; ``save_config`` round-trips exactly (floats are written
with full precision). Optional sections for controller gains and sensor noise
are parsed by their owning modules via ``read_toml``.
"""

from __future__ import annotations

import math
from dataclasses import asdict

import numpy as np
import tomli

from .params import (ActuatorParams, AeroParams, MissingFieldError, Morphology,
                     SideActuator, ValidationError, VehicleParams, WingShape,
                     chord_profile_moments, MOMENT_NAMES)

N_PROFILE_PANELS = 64   # default chord profile resolution (65 stations)


class ConfigError(ValueError):
    pass


def read_toml(path):
    with open(path, "rb") as f:
        return tomli.load(f)


def _get(section, key, where):
    try:
        return section[key]
    except KeyError:
        raise MissingFieldError(f"missing field '{key}' in [{where}]") from None


def load_config(path):
    """Load and validate a vehicle config file."""
    doc = read_toml(path)
    return vehicle_from_dict(doc)


def vehicle_from_dict(doc):
    try:
        morph_s = doc["morphology"]
        wing_s = doc["wing"]
        aero_s = doc["aero"]
        act_s = doc["actuator"]
        veh_s = doc["vehicle"]
    except KeyError as e:
        raise MissingFieldError(f"missing config section [{e.args[0]}]") from None

    morph = Morphology(
        wingspan=_get(morph_s, "wingspan", "morphology"),
        mass_total=_get(morph_s, "mass_total", "morphology"),
        d_s=_get(morph_s, "d_s", "morphology"),
        d_0=_get(morph_s, "d_0", "morphology"),
        body_inertia=np.array(_get(morph_s, "body_inertia", "morphology"), dtype=float),
        wing_mass=_get(morph_s, "wing_mass", "morphology"),
        leading_edge_mass=_get(morph_s, "leading_edge_mass", "morphology"),
        wing_inertia_about_joint=_get(morph_s, "wing_inertia_about_joint", "morphology"),
    )

    profile = np.array(_get(wing_s, "chord_profile", "wing"), dtype=float)
    R_w = _get(wing_s, "R_w", "wing")
    c_bar = _get(wing_s, "c_bar", "wing")
    if any(name in wing_s for name in MOMENT_NAMES):
        moments = {name: _get(wing_s, name, "wing") for name in MOMENT_NAMES}
        wing = WingShape(R_w=R_w, c_bar=c_bar, chord_profile=profile, **moments)
    else:
        wing = WingShape.from_profile(R_w, c_bar, profile)

    aero = AeroParams(
        rho_A=_get(aero_s, "rho_A", "aero"),
        C_rd=_get(aero_s, "C_rd", "aero"),
        cn_coeffs=tuple(_get(aero_s, "cn_coeffs", "aero")),
        dcp_coeffs=tuple(_get(aero_s, "dcp_coeffs", "aero")),
    )

    def side(name):
        s = act_s.get(name)
        if s is None:
            raise MissingFieldError(f"missing config section [actuator.{name}]")
        kw = {}
        for f in ("R_m", "K_t", "gear_ratio", "K_s_pos", "K_s_neg", "psi0",
                  "Theta_pos", "Theta_neg", "stop_stiffness", "stop_damping",
                  "stroke_limit"):
            kw[f] = _get(s, f, f"actuator.{name}")
        return SideActuator(**kw)

    actuator = ActuatorParams(left=side("left"), right=side("right"),
                              supply_voltage=_get(act_s, "supply_voltage", "actuator"))

    return VehicleParams(
        morphology=morph, wing=wing, aero=aero, actuator=actuator,
        flap_frequency=_get(veh_s, "flap_frequency", "vehicle"),
    )


def _fmt(v, indent=0):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple, np.ndarray)):
        items = ", ".join(_fmt(x) for x in v)
        return f"[{items}]"
    raise TypeError(f"cannot serialize {type(v)} to TOML")


def dumps_toml(doc):
    """Minimal TOML emitter for nested dicts of scalars and (nested) lists."""
    lines = []

    def emit(table, prefix):
        scalars = {k: v for k, v in table.items() if not isinstance(v, dict)}
        subs = {k: v for k, v in table.items() if isinstance(v, dict)}
        if prefix:
            lines.append(f"[{prefix}]")
        for k, v in scalars.items():
            lines.append(f"{k} = {_fmt(v)}")
        if scalars or prefix:
            lines.append("")
        for k, v in subs.items():
            emit(v, f"{prefix}.{k}" if prefix else k)

    emit(doc, "")
    return "\n".join(lines)


def vehicle_to_dict(params, extra_sections=None):
    m = params.morphology
    w = params.wing
    doc = {
        "vehicle": {"flap_frequency": params.flap_frequency},
        "morphology": {
            "wingspan": m.wingspan, "mass_total": m.mass_total,
            "d_s": m.d_s, "d_0": m.d_0,
            "body_inertia": [list(row) for row in np.asarray(m.body_inertia)],
            "wing_mass": m.wing_mass, "leading_edge_mass": m.leading_edge_mass,
            "wing_inertia_about_joint": m.wing_inertia_about_joint,
        },
        "wing": {
            "R_w": w.R_w, "c_bar": w.c_bar,
            **{name: getattr(w, name) for name in MOMENT_NAMES},
            "chord_profile": list(w.chord_profile),
        },
        "aero": {
            "rho_A": params.aero.rho_A, "C_rd": params.aero.C_rd,
            "cn_coeffs": list(params.aero.cn_coeffs),
            "dcp_coeffs": list(params.aero.dcp_coeffs),
        },
        "actuator": {
            "supply_voltage": params.actuator.supply_voltage,
            "left": asdict(params.actuator.left),
            "right": asdict(params.actuator.right),
        },
    }
    if extra_sections:
        for k, v in extra_sections.items():
            doc[k] = v
    return doc


def save_config(params, path, extra_sections=None):
    with open(path, "w") as f:
        f.write(dumps_toml(vehicle_to_dict(params, extra_sections)))


# ---------------------------------------------------------------------------
# Reference vehicle
# ---------------------------------------------------------------------------

def default_chord_profile(n_panels=N_PROFILE_PANELS, a=0.9, b=0.45):
    """Smooth hummingbird-like planform tabulated at n_panels+1 stations.

    Shape is r^a * (1-r)^b (widest around 2/3 span), normalized so the
    zeroth moment of the piecewise-linear interpolant is exactly 1
    (c_bar is then the true mean chord).
    """
    r = np.linspace(0.0, 1.0, n_panels + 1)
    c = r**a * (1.0 - r)**b
    c /= chord_profile_moments(c)[0]
    return c


def reference_vehicle(**overrides):
    """The 12 g / 168 mm reference vehicle used throughout tests and docs."""
    profile = default_chord_profile()
    d_0 = 0.010
    R_w = 0.074
    c_bar = 0.026
    wing_mass = 3.0e-4
    le_mass = 1.5e-4
    moments = chord_profile_moments(profile)
    wing_Izz = wing_mass * R_w**2 * moments[2] + le_mass * R_w**2 / 3.0

    def side():
        return SideActuator(
            R_m=2.5, K_t=1.0e-3, gear_ratio=5.0,
            K_s_pos=0.04, K_s_neg=0.04, psi0=0.0,
            Theta_pos=0.85, Theta_neg=-0.85,
            stop_stiffness=10.0, stop_damping=1.0e-3,
            stroke_limit=1.4)

    params = VehicleParams(
        morphology=Morphology(
            wingspan=0.168, mass_total=0.012, d_s=0.02, d_0=d_0,
            body_inertia=np.diag([1.0e-5, 1.0e-5, 2.0e-6]),
            wing_mass=wing_mass, leading_edge_mass=le_mass,
            wing_inertia_about_joint=wing_Izz),
        wing=WingShape.from_profile(R_w, c_bar, profile),
        aero=AeroParams(
            rho_A=1.225, C_rd=5.0,
            cn_coeffs=(3.4,),
            dcp_coeffs=(0.46, -4 * 0.82 / math.pi**2, 0.0,
                        -4 * 0.82 / (9 * math.pi**2), 0.0,
                        -4 * 0.82 / (25 * math.pi**2))),
        actuator=ActuatorParams(left=side(), right=side(), supply_voltage=16.0),
        flap_frequency=34.0,
    )
    if overrides:
        from dataclasses import replace
        params = replace(params, **overrides)
    return params
