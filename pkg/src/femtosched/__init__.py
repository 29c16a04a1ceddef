"""LTE downlink scheduling simulator: PF, Log-Rule and FLS over a macrocell with optional femtocells."""

from .config import ScenarioConfig, load_scenario
from .engine import Simulation, run
from .errors import ConfigError, InvariantViolation, TraceError
from .metrics import MetricsReport
from .scenario import SweepPlan, build_topology, run_sweep

__all__ = [
    "ConfigError",
    "InvariantViolation",
    "MetricsReport",
    "ScenarioConfig",
    "Simulation",
    "SweepPlan",
    "TraceError",
    "build_topology",
    "load_scenario",
    "run",
    "run_sweep",
]
__version__ = "0.1.0"
