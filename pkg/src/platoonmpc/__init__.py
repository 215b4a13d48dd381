"""Distributed MPC platoon coordination at a signalized intersection."""

__version__ = "0.1.0"

from .params import MPCConfig, VehicleParams, default_mpc_config
from .safeset import BrakingSpec, SafeSetFamily, build_safe_set, max_deceleration
from .sim import ScenarioConfig, measure_throughput, run, sweep_trust

__all__ = [
    "BrakingSpec",
    "MPCConfig",
    "SafeSetFamily",
    "ScenarioConfig",
    "VehicleParams",
    "__version__",
    "build_safe_set",
    "default_mpc_config",
    "max_deceleration",
    "measure_throughput",
    "run",
    "sweep_trust",
]
