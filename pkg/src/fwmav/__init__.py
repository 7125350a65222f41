"""High-fidelity flapping-wing micro air vehicle flight-dynamics simulator."""

from .config import load_config, reference_vehicle, save_config
from .params import (ActuatorParams, AeroLoad, AeroParams, ControlInput,
                     Morphology, SimState, SideActuator, ValidationError,
                     VehicleParams, WingShape, Wrench6)

__version__ = "0.1.0"

__all__ = [
    "ActuatorParams", "AeroLoad", "AeroParams", "ControlInput", "Morphology",
    "SimState", "SideActuator", "ValidationError", "VehicleParams",
    "WingShape", "Wrench6", "load_config", "reference_vehicle", "save_config",
    "__version__",
]
