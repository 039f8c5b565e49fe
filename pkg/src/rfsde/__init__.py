"""Simulation and kernel trend estimation for reflected fractional SDEs."""

__version__ = "0.1.0"

from .estimator import EstimatorConfig, TrendEstimator, estimate_trend
from .experiments import ExperimentConfig, asymptotic_study, lemma4_study, risk_sweep
from .fbm import SeedSpec, sample_fbm
from .kernels import KernelSpec, sigma2_HK
from .reflect import TubeSpec, solve_reflected
from .specdsl import FunctionSpec, parse
from .trend import solve_trend

__all__ = [
    "EstimatorConfig",
    "ExperimentConfig",
    "FunctionSpec",
    "KernelSpec",
    "SeedSpec",
    "TrendEstimator",
    "TubeSpec",
    "asymptotic_study",
    "estimate_trend",
    "lemma4_study",
    "parse",
    "risk_sweep",
    "sample_fbm",
    "sigma2_HK",
    "solve_reflected",
    "solve_trend",
]
