"""Calibration of mode-choice intercepts for an agent-based travel simulator."""
from .config import ConfigError, RunConfig
from .runner import calibrate
from .sim import MODES, Scenario, load_scenario, run_simulation
from .space import InterceptConfig, ParameterSpace

__version__ = "0.1.0"

__all__ = ["ConfigError", "RunConfig", "calibrate", "MODES", "Scenario", "load_scenario",
           "run_simulation", "InterceptConfig", "ParameterSpace"]
