"""Human-targeted total treatment effects under network interference with latent human / AI types."""

from .core import (
    ConfigError,
    EffectSeries,
    ExperimentConfig,
    Panel,
    PopulationConfig,
    PriorDistribution,
    PriorMode,
    PriorQualityConfig,
    StructuralParams,
    TreatmentPlan,
    TypeAssignment,
    draw_population,
)
from .dynamics import WorldSet, build_interference, ground_truth_tte, population_tte, run_parallel_worlds
from .ese import ThetaReduced, analytic_tte_h, population_trajectory, reduce_params
from .estimator import FitReport, IdentifiabilityError, check_identifiability, estimate_tte_h, fit_theta
from .subpop import Subpopulation, construct_subpopulations, summarize

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "EffectSeries",
    "ExperimentConfig",
    "FitReport",
    "IdentifiabilityError",
    "Panel",
    "PopulationConfig",
    "PriorDistribution",
    "PriorMode",
    "PriorQualityConfig",
    "StructuralParams",
    "Subpopulation",
    "ThetaReduced",
    "TreatmentPlan",
    "TypeAssignment",
    "WorldSet",
    "analytic_tte_h",
    "build_interference",
    "check_identifiability",
    "construct_subpopulations",
    "draw_population",
    "estimate_tte_h",
    "fit_theta",
    "ground_truth_tte",
    "population_trajectory",
    "population_tte",
    "reduce_params",
    "run_parallel_worlds",
    "summarize",
]
