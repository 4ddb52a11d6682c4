"""Bijections between the sampler's unconstrained space and model space.

Every sampled coordinate is either ``log``-transformed (support (lo, inf))
or ``interval``-transformed (support (lo, hi) via a scaled logistic).  An
:class:`IndexMap` holds one named transform per coordinate and applies
them vectorized, together with the summed log absolute Jacobian that the
posterior needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["Coord", "IndexMap", "coord_for_support"]

_LOG, _INTERVAL = 0, 1


@dataclass(frozen=True)
class Coord:
    """One sampled coordinate: its name and constraining transform."""

    name: str
    kind: str  # "log" or "interval"
    lo: float = 0.0
    hi: float = math.inf

    def __post_init__(self):
        if self.kind not in ("log", "interval"):
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if self.kind == "interval" and not (
            math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi
        ):
            raise ValueError(f"interval transform needs finite lo < hi for {self.name}")


def coord_for_support(name: str, lo: float, hi: float) -> Coord:
    """Choose the transform matching a distribution's support."""
    if math.isinf(hi):
        return Coord(name, "log", lo=lo)
    return Coord(name, "interval", lo=lo, hi=hi)


def _sigmoid(u):
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    e = np.exp(u[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class IndexMap:
    """Ordered collection of coordinates with vectorized transforms."""

    def __init__(self, coords):
        self.coords = list(coords)
        names = [c.name for c in self.coords]
        if len(set(names)) != len(names):
            raise ValueError("coordinate names must be unique")
        self.names = names
        self.dim = len(self.coords)
        self.kind_code = np.array(
            [_LOG if c.kind == "log" else _INTERVAL for c in self.coords]
        )
        self.lo = np.array([c.lo for c in self.coords])
        self.hi = np.array([c.hi if c.kind == "interval" else 0.0 for c in self.coords])
        self.width = self.hi - self.lo
        self._is_log = self.kind_code == _LOG
        self._is_int = ~self._is_log

    def index_of(self, name: str) -> int:
        return self.names.index(name)

    def constrain(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        x = np.empty_like(u)
        x[self._is_log] = self.lo[self._is_log] + np.exp(u[self._is_log])
        s = _sigmoid(u[self._is_int])
        x[self._is_int] = self.lo[self._is_int] + self.width[self._is_int] * s
        return x

    def unconstrain(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.empty_like(x)
        zl = x[self._is_log] - self.lo[self._is_log]
        if np.any(zl <= 0.0):
            raise ValueError("value at or below the lower bound of a log coordinate")
        u[self._is_log] = np.log(zl)
        p = (x[self._is_int] - self.lo[self._is_int]) / self.width[self._is_int]
        if np.any((p <= 0.0) | (p >= 1.0)):
            raise ValueError("value outside the open interval of a coordinate")
        u[self._is_int] = np.log(p) - np.log1p(-p)
        return u

    def log_jacobian(self, u: np.ndarray) -> float:
        """log |d constrain / du| summed over all coordinates."""
        u = np.asarray(u, dtype=float)
        total = float(np.sum(u[self._is_log]))
        ui = u[self._is_int]
        # log width + log sigmoid(u) + log sigmoid(-u), stably
        total += float(
            np.sum(np.log(self.width[self._is_int]))
            - np.sum(np.logaddexp(0.0, -ui))
            - np.sum(np.logaddexp(0.0, ui))
        )
        return total
