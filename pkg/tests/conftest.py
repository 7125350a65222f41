"""Shared fixtures: reference vehicle, backend parametrization, and a
session-scoped closed-loop hover run reused by the control and acceptance
tests (it is by far the most expensive artifact in the suite)."""

import time

import numpy as np
import pytest

from fwmav.config import reference_vehicle
from fwmav.control import ClosedLoopSim, Setpoint, fly_closed_loop, rms_report
from fwmav.engine import available_backends
from fwmav.params import ControlInput

# trim found once offline for the reference vehicle; test_control checks it
# against the vehicle weight so drift in the model shows up as a failure.
TRIM_V_AMP = 7.947265625

HOVER_SETPOINT = Setpoint(position=(0.0, 0.0, 0.4))
HOVER_DURATION = 20.0
HOVER_SEED = 7

# wall-clock seconds of the hover fixture run, for the realtime acceptance
# check (filled in when the fixture first executes)
HOVER_WALL = {}

# [PASS]/[FAIL] lines accumulated by the acceptance gate, echoed after the
# run so they survive output capture
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def pytest_generate_tests(metafunc):
    if "backend" in metafunc.fixturenames:
        metafunc.parametrize("backend", available_backends())


@pytest.fixture(scope="session")
def vehicle():
    return reference_vehicle()


@pytest.fixture(scope="session")
def trim_cmd():
    return ControlInput(V_amp=TRIM_V_AMP)


@pytest.fixture(scope="session")
def hover_run(vehicle, trim_cmd):
    """20 s closed-loop hover at the reference trim, fixed seed."""
    t0 = time.perf_counter()
    log = fly_closed_loop(vehicle, HOVER_SETPOINT, duration=HOVER_DURATION,
                          trim=trim_cmd, seed=HOVER_SEED)
    HOVER_WALL["seconds"] = time.perf_counter() - t0
    report = rms_report(log, HOVER_SETPOINT)
    return log, report
