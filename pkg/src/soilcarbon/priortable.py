"""Prior tables for the soil-carbon model, scenario rescaling, and
serialization of prior entries to the plain-dict form used in config files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .distributions import InverseGamma, LogNormal, TruncNormal
from .pools import POOL_NAMES

__all__ = [
    "PriorTable",
    "default_priors",
    "apply_scenario",
    "prior_to_dict",
    "prior_from_dict",
    "SCENARIOS",
]

SCENARIOS = ("N", "A", "B")

KAPPA_NAMES = ("kappa_d", "kappa_r", "kappa_f", "kappa_s", "kappa_h")
PI_M_NAMES = ("pi_m_d", "pi_m_r", "pi_m_f", "pi_m_s", "pi_m_h")
SIGMA2_PROCESS_NAMES = ("sigma2_d", "sigma2_r", "sigma2_f", "sigma2_s", "sigma2_h")
SIGMA2_MEAS_NAMES = ("sigma2_toc", "sigma2_poc", "sigma2_roc")


def init_name(plot_index: int, pool: str) -> str:
    return f"init[{plot_index},{pool}]"


def log_alpha_name(treatment: str) -> str:
    return f"log_alpha[{treatment}]"


@dataclass(frozen=True)
class PriorTable:
    """Named prior for every model parameter and initial condition."""

    entries: dict
    treatments: tuple
    n_plots: int

    def __getitem__(self, name: str):
        return self.entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def items(self):
        return self.entries.items()

    def names(self):
        return list(self.entries)

    def replace(self, overrides: dict) -> "PriorTable":
        """New table with some entries replaced; unknown names rejected."""
        unknown = set(overrides) - set(self.entries)
        if unknown:
            raise KeyError(f"unknown prior entries: {sorted(unknown)}")
        merged = dict(self.entries)
        merged.update(overrides)
        return PriorTable(merged, self.treatments, self.n_plots)

    def to_dict(self) -> dict:
        return {name: prior_to_dict(d) for name, d in self.entries.items()}


def default_priors(n_plots: int, treatments) -> PriorTable:
    """The standard prior table for a trial with ``n_plots`` plots.

    Treatment modifiers get one (log-scale) prior per distinct treatment
    label; initial conditions get one entry per plot and pool, indexed by
    plot position.
    """
    if n_plots < 1:
        raise ValueError("n_plots must be >= 1")
    treatments = tuple(dict.fromkeys(treatments))
    e = {}
    e["kappa_d"] = TruncNormal(10.0, 0.5, 5.0, 20.0)
    e["kappa_r"] = TruncNormal(0.07, 0.0035, 0.05, 5.0)
    e["kappa_f"] = TruncNormal(0.66, 0.033, 0.3, 1.0)
    e["kappa_s"] = TruncNormal(0.66, 0.033, 0.3, 1.0)
    e["kappa_h"] = TruncNormal(0.02, 0.001, 0.005, 0.05)
    for tau in treatments:
        e[log_alpha_name(tau)] = TruncNormal(0.0, 1.0, -5.0, 5.0)
    for name, mean in zip(PI_M_NAMES, (0.49, 0.49, 0.0, 0.0, 0.02)):
        e[name] = TruncNormal(mean, 0.01, 0.0, 1.0)
    e["p_xf"] = TruncNormal(0.46, 0.01, 0.0, 1.0)
    e["p_hs"] = TruncNormal(0.46, 0.01, 0.0, 1.0)
    e["p_clay"] = TruncNormal(0.16, 0.02, 0.0, 1.0)
    e["r_dpm_rpm"] = TruncNormal(1.44, 0.5, 0.0, math.inf)
    for name in SIGMA2_PROCESS_NAMES:
        e[name] = InverseGamma(403.4, 0.318)
    e["sigma2_toc"] = InverseGamma(21.0 / 2.0, 0.053)
    e["sigma2_poc"] = InverseGamma(21.0 / 2.0, 0.039)
    e["sigma2_roc"] = InverseGamma(21.0 / 2.0, 0.290)
    ic_sd = {"d": 0.1, "r": 100.0, "f": 0.01, "s": 0.01, "h": 100.0, "i": 10.0}
    for plot in range(n_plots):
        for pool in POOL_NAMES:
            e[init_name(plot, pool)] = TruncNormal(0.0, ic_sd[pool], 0.0, math.inf)
    return PriorTable(e, treatments, n_plots)


def apply_scenario(table: PriorTable, scenario: str) -> PriorTable:
    """Prior-sensitivity scenarios applied to a base table.

    N leaves the table unchanged; A doubles the scale (4x variance) of the
    decay-rate priors; B replaces every process-variance prior with the
    more diffuse InverseGamma(102.4, 0.08).
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
    if scenario == "N":
        return table
    overrides = {}
    if scenario == "A":
        for name in KAPPA_NAMES:
            d = table[name]
            overrides[name] = TruncNormal(d.mu, 2.0 * d.sigma, d.lo, d.hi)
    else:
        for name in SIGMA2_PROCESS_NAMES:
            overrides[name] = InverseGamma(102.4, 0.08)
    return table.replace(overrides)


def _bound_to_json(b: float):
    return None if math.isinf(b) else b


def _bound_from_json(b, default: float) -> float:
    return default if b is None else float(b)


def prior_to_dict(dist) -> dict:
    """Plain-dict (JSON-compatible) form of a prior distribution."""
    if isinstance(dist, TruncNormal):
        return {
            "family": "truncnormal",
            "mu": dist.mu,
            "sigma": dist.sigma,
            "lo": _bound_to_json(dist.lo),
            "hi": _bound_to_json(dist.hi),
        }
    if isinstance(dist, InverseGamma):
        return {"family": "invgamma", "shape": dist.shape, "scale": dist.scale}
    if isinstance(dist, LogNormal):
        return {"family": "lognormal", "mu": dist.mu, "sigma2": dist.sigma2}
    raise TypeError(f"unsupported prior type {type(dist).__name__}")


def prior_from_dict(spec: dict):
    family = spec.get("family")
    if family == "truncnormal":
        return TruncNormal(
            float(spec["mu"]),
            float(spec["sigma"]),
            _bound_from_json(spec.get("lo"), -math.inf),
            _bound_from_json(spec.get("hi"), math.inf),
        )
    if family == "invgamma":
        return InverseGamma(float(spec["shape"]), float(spec["scale"]))
    if family == "lognormal":
        return LogNormal(float(spec["mu"]), float(spec["sigma2"]))
    raise ValueError(f"unknown prior family {family!r}")
