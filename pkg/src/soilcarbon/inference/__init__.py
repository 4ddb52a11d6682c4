"""Posterior construction and MCMC sampling."""

from .data import FRACTION_NAMES, LatentTrajectory, Observation, PlotData
from .posterior import Posterior, build_posterior, log_data, log_process
from .transforms import Coord, IndexMap, coord_for_support

__all__ = [
    "FRACTION_NAMES",
    "LatentTrajectory",
    "Observation",
    "PlotData",
    "Posterior",
    "build_posterior",
    "log_data",
    "log_process",
    "Coord",
    "IndexMap",
    "coord_for_support",
]
