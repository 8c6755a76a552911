"""Granular media equation in one dimension: solvers, optimal transport and convergence diagnostics."""
from .measures import GridMeasure, ParticleEnsemble
from .potentials import PotentialSpec, builtin

__version__ = "0.1.0"

__all__ = ["GridMeasure", "ParticleEnsemble", "PotentialSpec", "builtin"]
