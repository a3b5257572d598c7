"""Adaptive regulation to invariant sets: simulation and diagnostics."""
from .dynamics import ControllerMode, DriftModel, Models, PlantModel, SimState, TargetSpec, Variant
from .integrate import IntegrationConfig, Trajectory, integrate
from .scenarios import BUILTINS, Scenario, builtin, from_config

__all__ = [
    "BUILTINS", "ControllerMode", "DriftModel", "IntegrationConfig", "Models", "PlantModel",
    "Scenario", "SimState", "TargetSpec", "Trajectory", "Variant", "builtin", "from_config",
    "integrate",
]
