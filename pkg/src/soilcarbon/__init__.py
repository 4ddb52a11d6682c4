"""Stochastic six-pool soil-carbon model with Bayesian inference."""

from .diagnostics import SummaryRow, flux_posterior, rhat, summarize
from .estimator import SoilCarbonSampler
from .inference.data import Observation, PlotData
from .inference.sampling import ChainDraws, SamplerConfig, run_hmc
from .pools import (
    POOL_NAMES,
    DecayRates,
    Forcing,
    ModelParams,
    NoiseParams,
    PoolState,
    PrimaryRouting,
    derive_routing,
    step_deterministic,
    step_stochastic,
)
from .priortable import PriorTable, apply_scenario, default_priors
from .simulate import simulate_trajectory

__version__ = "0.1.0"

__all__ = [
    "SummaryRow",
    "flux_posterior",
    "rhat",
    "summarize",
    "SoilCarbonSampler",
    "Observation",
    "PlotData",
    "ChainDraws",
    "SamplerConfig",
    "run_hmc",
    "POOL_NAMES",
    "DecayRates",
    "Forcing",
    "ModelParams",
    "NoiseParams",
    "PoolState",
    "PrimaryRouting",
    "derive_routing",
    "step_deterministic",
    "step_stochastic",
    "PriorTable",
    "apply_scenario",
    "default_priors",
    "simulate_trajectory",
    "__version__",
]
