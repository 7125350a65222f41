"""Gym-style adapter for the fwmav simulator's environment wire protocol."""

from .checker import check_env
from .client import AdapterError, RemoteEnv, make_env
from .spaces import Box

__all__ = ["AdapterError", "Box", "RemoteEnv", "check_env", "make_env"]
__version__ = "0.1.0"
