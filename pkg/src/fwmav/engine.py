"""Engine backend selection: compiled extension when available, pure Python
otherwise. Override with FWMAV_BACKEND=python|cython."""

from __future__ import annotations

import os
import warnings

from ._engine_py import PythonEngine

try:
    from ._engine import CythonEngine
except ImportError:
    CythonEngine = None


def available_backends():
    return ("cython", "python") if CythonEngine is not None else ("python",)


def default_backend():
    env = os.environ.get("FWMAV_BACKEND")
    if env:
        if env not in ("cython", "python"):
            raise ValueError(f"FWMAV_BACKEND must be 'cython' or 'python', got {env!r}")
        if env == "cython" and CythonEngine is None:
            raise RuntimeError("FWMAV_BACKEND=cython but the extension is not built")
        return env
    if CythonEngine is None:
        warnings.warn("fwmav._engine extension not built; falling back to the "
                      "pure-Python engine (slow)", RuntimeWarning, stacklevel=2)
        return "python"
    return "cython"


def make_engine(params, backend=None, **kwargs):
    backend = backend or default_backend()
    if backend == "python":
        return PythonEngine(params, **kwargs)
    if backend == "cython":
        if CythonEngine is None:
            raise RuntimeError("compiled engine requested but not available")
        return CythonEngine(params, **kwargs)
    raise ValueError(f"unknown backend {backend!r}")


_engine_cache = {}


def cached_engine(params, backend=None):
    """Engine instance reused per (params identity, backend).

    Engines are cheap but not free to build; simulation entry points that are
    called repeatedly with the same VehicleParams go through this cache. The
    cache holds a strong reference to params so ids stay unique.
    """
    key = (id(params), backend)
    hit = _engine_cache.get(key)
    if hit is not None and hit[0] is params:
        return hit[1]
    eng = make_engine(params, backend)
    _engine_cache[key] = (params, eng)
    if len(_engine_cache) > 256:
        _engine_cache.clear()
        _engine_cache[key] = (params, eng)
    return eng
