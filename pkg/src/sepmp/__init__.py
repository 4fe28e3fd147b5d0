"""Simulation and stochastic control of SDE-driven self-exciting jump processes."""
from .errors import (
    AdmissibilityError, ConfigError, ExplosionError, ModeError, NonFiniteState,
    PositivityViolation, SepmpError, SimulationError, SupportViolation,
)
from .mc import MCEstimate
from .process import EventPath, IntensityModel, MarkKernel, simulate_events
from .policy import ControlPolicy, indicator
from .engine import StateCoefficients, TimeGrid, simulate_state, exact_loglinear_state
from .report import TestReport

__all__ = [
    "AdmissibilityError", "ConfigError", "ControlPolicy", "EventPath", "ExplosionError",
    "IntensityModel", "MCEstimate", "MarkKernel", "ModeError", "NonFiniteState",
    "PositivityViolation", "SepmpError", "SimulationError", "StateCoefficients",
    "SupportViolation", "TestReport", "TimeGrid", "exact_loglinear_state", "indicator",
    "simulate_events", "simulate_state",
]
__version__ = "0.1.0"
