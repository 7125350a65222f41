"""Spins up a real simulator server as a subprocess via its CLI, so the
adapter under test talks to the primary package only over the socket."""

import re
import subprocess
import sys

import pytest


@pytest.fixture(scope="session")
def server():
    proc = subprocess.Popen(
        [sys.executable, "-m", "fwmav.cli", "serve",
         "--host", "127.0.0.1", "--port", "0"],
        stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True)
    line = proc.stdout.readline()
    m = re.match(r"serving on (\S+):(\d+)", line)
    if not m:
        proc.kill()
        raise RuntimeError(f"server did not start: {line!r}")
    address = (m.group(1), int(m.group(2)))
    # the readline above already synchronized on the listening socket
    yield address
    proc.terminate()
    try:
        proc.wait(timeout=10)
    except subprocess.TimeoutExpired:
        proc.kill()
