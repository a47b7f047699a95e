"""Mean-field N-body simulation of the single-wave (HMF-type) model with a
diffusive model for the escape of trapped particles."""

from .model import ModelParams, ParticleEnsemble, MeanFieldSample, compute_mean_fields
from .init import InitSpec, sample
from .integrator import IntegratorConfig, run
from .equilibrium import EquilibriumSolution, solve_self_consistency
from .fp import EscapePrediction

__version__ = "0.1.0"

__all__ = ["ModelParams", "ParticleEnsemble", "MeanFieldSample", "compute_mean_fields",
           "InitSpec", "sample", "IntegratorConfig", "run", "EquilibriumSolution",
           "solve_self_consistency", "EscapePrediction"]
