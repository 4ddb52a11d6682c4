"""Convergence diagnostics, posterior summaries, and flux estimates.

Everything here is a pure function over immutable draw sets: the potential
scale reduction factor R-hat, pooled quantile summaries, treatment-level
carbon flux posteriors, and the spatial trend-surface residual diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pools import POOL_NAMES

__all__ = [
    "RHAT_THRESHOLD",
    "SummaryRow",
    "TrendSurfaceResult",
    "rhat",
    "summarize",
    "pooled_quantity",
    "flux_draws",
    "flux_posterior",
    "trend_surface_diagnostic",
]

RHAT_THRESHOLD = 1.01


def rhat(chains) -> float:
    """Potential scale reduction factor over per-chain scalar series.

    With m chains of length n, B is n times the variance of the chain
    means, W the mean of the within-chain sample variances, and

        R-hat = sqrt( (((n - 1)/n) W + B/n) / W ).

    Identical chains give sqrt((n-1)/n), slightly below 1.
    """
    series = [np.asarray(c, dtype=float) for c in chains]
    m = len(series)
    if m < 2:
        raise ValueError("rhat needs at least 2 chains")
    n = series[0].size
    if n < 2 or any(c.shape != (n,) for c in series):
        raise ValueError("chains must be equal-length with n >= 2")
    means = np.array([c.mean() for c in series])
    variances = np.array([c.var(ddof=1) for c in series])
    w = variances.mean()
    if w == 0.0:
        raise ValueError("rhat undefined: all chains are constant")
    b = n * means.var(ddof=1)
    var_plus = (n - 1.0) / n * w + b / n
    return math.sqrt(var_plus / w)


@dataclass(frozen=True)
class SummaryRow:
    """Posterior summary of one scalar quantity."""

    name: str
    median: float
    q25: float
    q75: float
    q05: float
    q95: float
    prob_neg: float | None = None

    def __post_init__(self):
        if not self.q05 <= self.q25 <= self.median <= self.q75 <= self.q95:
            raise ValueError(f"quantiles out of order for {self.name}")

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "median": self.median,
            "q25": self.q25,
            "q75": self.q75,
            "q05": self.q05,
            "q95": self.q95,
            "prob_neg": self.prob_neg,
        }


def pooled_quantity(chains, quantity) -> np.ndarray:
    """Draws of a quantity pooled across chains, in chain order.

    ``quantity`` is either a coordinate name or a callable mapping one
    chain's draw matrix (n_kept, dim) to a vector of derived values.
    """
    parts = []
    for chain in chains:
        if callable(quantity):
            part = np.asarray(quantity(chain.draws), dtype=float)
        else:
            part = chain.column(quantity)
        parts.append(np.atleast_1d(part))
    return np.concatenate(parts)


def summarize(chains, quantity, name: str | None = None) -> SummaryRow:
    """Quantile summary of a coordinate or derived quantity.

    Draws are pooled across chains; quantiles use linear interpolation
    between order statistics; the tail probability is the empirical
    fraction of pooled draws below zero.
    """
    pooled = pooled_quantity(chains, quantity)
    if pooled.size == 0:
        raise ValueError("no draws to summarize")
    q05, q25, med, q75, q95 = np.quantile(pooled, [0.05, 0.25, 0.5, 0.75, 0.95])
    if name is None:
        name = quantity if isinstance(quantity, str) else "derived"
    return SummaryRow(
        name=name,
        median=float(med),
        q25=float(q25),
        q75=float(q75),
        q05=float(q05),
        q95=float(q95),
        prob_neg=float(np.mean(pooled < 0.0)),
    )


def _state_columns(names, plot_id, month):
    """Draw-matrix column indices of one plot-month's six pools."""
    cols = []
    for pool in POOL_NAMES:
        if month == 0 or pool == "i":
            key = f"init[{plot_id},{pool}]"
        else:
            key = f"pool[{plot_id},{month},{pool}]"
        cols.append(names.index(key))
    return cols


def flux_draws(chains, plots) -> dict:
    """Per-treatment posterior draws of the annualized carbon flux.

    For each kept draw, the flux of plot i is (12/T) times the drop in
    total carbon from month 0 to month T; the treatment flux is the
    area-weighted average over its plots.  Positive values are net loss
    to the atmosphere.
    """
    plots = sorted(plots, key=lambda p: p.plot_id)
    by_treatment: dict = {}
    for plot in plots:
        by_treatment.setdefault(plot.treatment, []).append(plot)
    names = chains[0].names
    out = {}
    for treatment, members in by_treatment.items():
        parts = []
        for chain in chains:
            per_plot = []
            for plot in members:
                c0 = _state_columns(names, plot.plot_id, 0)
                cT = _state_columns(names, plot.plot_id, plot.n_months)
                total0 = chain.draws[:, c0].sum(axis=1)
                totalT = chain.draws[:, cT].sum(axis=1)
                per_plot.append(12.0 * (total0 - totalT) / plot.n_months)
            areas = np.array([p.area for p in members])
            stacked = np.stack(per_plot, axis=1)
            parts.append(stacked @ areas / areas.sum())
        out[treatment] = np.concatenate(parts)
    return out


def flux_posterior(chains, plots) -> dict:
    """SummaryRow of the treatment-level flux posterior, per treatment."""
    draws = flux_draws(chains, plots)
    return {
        treatment: summarize(
            [_ArrayChain(values)], lambda d: d[:, 0], name=f"flux[{treatment}]"
        )
        for treatment, values in draws.items()
    }


class _ArrayChain:
    """Adapts a bare draw vector to the chain interface summarize expects."""

    def __init__(self, values):
        self.draws = np.asarray(values, dtype=float).reshape(-1, 1)
        self.names = ["value"]

    def column(self, name):
        return self.draws[:, 0]


@dataclass(frozen=True)
class TrendSurfaceResult:
    """Residual-pair table and fit summaries of the spatial trend surface."""

    rows: tuple  # (d, sq_diff, rootabs_diff, type), sorted by pair index
    coef: dict  # type -> OLS coefficients on (1, x, y, xy)
    sigma2: dict  # type -> unbiased residual variance


def trend_surface_diagnostic(samples: dict) -> TrendSurfaceResult:
    """Exploratory check for residual spatial dependence.

    For each measurement type, fits log(value) on (1, x, y, xy) by
    ordinary least squares and tabulates, for every unordered pair of
    locations, the distance alongside the squared and root-absolute
    residual differences.  Flat tables against distance indicate no
    residual spatial structure.
    """
    rows = []
    coef = {}
    sigma2 = {}
    for kind, triples in samples.items():
        pts = [(float(x), float(y), float(v)) for x, y, v in triples]
        if len(pts) < 5:
            raise ValueError(f"need at least 5 locations for type {kind}")
        if any(v <= 0.0 for _, _, v in pts):
            raise ValueError(f"values must be positive for type {kind}")
        x = np.array([p[0] for p in pts])
        y = np.array([p[1] for p in pts])
        logv = np.log([p[2] for p in pts])
        design = np.column_stack([np.ones_like(x), x, y, x * y])
        beta, _, rank, _ = np.linalg.lstsq(design, logv, rcond=None)
        if rank < design.shape[1]:
            raise ValueError(
                f"rank-deficient trend design for type {kind}; "
                "coordinates are collinear"
            )
        resid = logv - design @ beta
        coef[kind] = beta
        dof = len(pts) - design.shape[1]
        sigma2[kind] = float(resid @ resid / dof) if dof > 0 else float("nan")
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                d = math.hypot(x[i] - x[j], y[i] - y[j])
                diff = abs(resid[i] - resid[j])
                rows.append((d, diff * diff, math.sqrt(diff), kind))
    return TrendSurfaceResult(rows=tuple(rows), coef=coef, sigma2=sigma2)
