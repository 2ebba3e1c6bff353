"""Joint transmit beamforming and fluid-antenna positioning for multi-static sensing."""

from .detection import DetectorConfig, detection_probability
from .optimizer import RunResult, SchemeMode, run, verify_constraints
from .physics import AntennaLayout, SystemState, TransmitCovariances
from .scenario import ScenarioConfig, generate_scenario, load_config

__all__ = [
    "AntennaLayout",
    "DetectorConfig",
    "RunResult",
    "ScenarioConfig",
    "SchemeMode",
    "SystemState",
    "TransmitCovariances",
    "detection_probability",
    "generate_scenario",
    "load_config",
    "run",
    "verify_constraints",
]
