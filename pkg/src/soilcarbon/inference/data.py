"""Per-plot data containers used by the posterior."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..pools import Forcing, PoolState

__all__ = ["Observation", "PlotData", "LatentTrajectory", "FRACTION_NAMES"]

FRACTION_NAMES = ("TOC", "POC", "ROC")


@dataclass(frozen=True)
class Observation:
    """One measured carbon fraction at a plot-month."""

    month: int
    kind: str  # TOC, POC or ROC
    value: float

    def __post_init__(self):
        if self.kind not in FRACTION_NAMES:
            raise ValueError(f"observation kind must be one of {FRACTION_NAMES}")
        if self.month < 0:
            raise ValueError("observation month must be >= 0")
        if not (math.isfinite(self.value) and self.value > 0.0):
            raise ValueError(
                f"observation values must be strictly positive, got {self.value}"
            )


@dataclass(frozen=True)
class PlotData:
    """Forcing series and observations for one field plot."""

    plot_id: str
    treatment: str
    area: float
    forcing: tuple  # length-T tuple of Forcing
    observations: tuple  # tuple of Observation

    def __post_init__(self):
        object.__setattr__(self, "forcing", tuple(self.forcing))
        object.__setattr__(self, "observations", tuple(self.observations))
        if not (math.isfinite(self.area) and self.area > 0.0):
            raise ValueError(f"plot area must be > 0, got {self.area}")
        if not self.forcing:
            raise ValueError("forcing sequence must be nonempty")
        for f in self.forcing:
            if not isinstance(f, Forcing):
                raise TypeError("forcing entries must be Forcing instances")
        T = self.n_months
        for o in self.observations:
            if o.month > T:
                raise ValueError(
                    f"observation month {o.month} beyond horizon {T} "
                    f"for plot {self.plot_id}"
                )

    @property
    def n_months(self) -> int:
        return len(self.forcing)


@dataclass(frozen=True)
class LatentTrajectory:
    """Pool states for months 0..T of one plot."""

    states: tuple  # length T+1 tuple of PoolState

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        if len(self.states) < 2:
            raise ValueError("a trajectory needs at least months 0 and 1")
        for s in self.states:
            if not isinstance(s, PoolState):
                raise TypeError("trajectory entries must be PoolState instances")
        for s in self.states[1:]:
            arr = s.as_array()
            if np.any(arr[:5] <= 0.0):
                raise ValueError(
                    "non-inert pools must be strictly positive for months >= 1"
                )

    def __len__(self):
        return len(self.states)

    def __getitem__(self, t):
        return self.states[t]

    @property
    def n_months(self) -> int:
        return len(self.states) - 1

    def as_matrix(self) -> np.ndarray:
        return np.stack([s.as_array() for s in self.states])
