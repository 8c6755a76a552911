"""Experiment harness: scenario files, rate fitting, SVG plots and the CLI."""
from .config import Scenario, load_scenario, parse_scenario
from .experiments import run_scenario
from .fitting import (
    RateReport,
    fit_exponential,
    fit_polynomial_envelope,
    polynomial_constant,
)
from .plotting import emit_plot

__all__ = [
    "Scenario", "load_scenario", "parse_scenario", "run_scenario", "RateReport",
    "fit_exponential", "fit_polynomial_envelope", "polynomial_constant", "emit_plot",
]
