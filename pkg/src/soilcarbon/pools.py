"""Six-pool soil-carbon dynamics.

Carbon is tracked in six pools: decomposable plant material (D), resistant
plant material (R), fast microbial biomass (F), slow microbial biomass (S),
humus (H), and inert organic matter (I).  Each month, carbon in the first
five pools decays at a treatment-modified rate; decayed carbon is either
retained in the soil (routed to the F, S, and H pools) or respired to the
atmosphere as CO2.  The I pool never changes.  Plant and manure inputs are
routed to the pools by fixed proportions.

All stocks are in Mg C per hectare, decay rates are annual (the monthly
step divides by 12), and time is measured in months.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

POOL_NAMES = ("d", "r", "f", "s", "h", "i")

__all__ = [
    "POOL_NAMES",
    "PoolState",
    "PrimaryRouting",
    "DerivedRouting",
    "DecayRates",
    "Forcing",
    "NoiseParams",
    "ModelParams",
    "DegenerateStateError",
    "derive_routing",
    "decayed_masses",
    "step_deterministic",
    "step_stochastic",
    "build_propagator",
    "observe_map",
    "flux_plot",
    "flux_treatment",
]


class DegenerateStateError(ValueError):
    """A pool's deterministic mean is zero where lognormal noise applies."""


def _check_finite_nonneg(name, value):
    if not math.isfinite(value) or value < 0.0:
        raise ValueError(f"{name} must be finite and >= 0, got {value}")


def _check_unit_interval(name, value):
    if not math.isfinite(value) or not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class PoolState:
    """Carbon stock in each of the six pools (Mg C/ha)."""

    d: float
    r: float
    f: float
    s: float
    h: float
    i: float

    def __post_init__(self):
        for name in POOL_NAMES:
            _check_finite_nonneg(f"pool {name}", getattr(self, name))

    def total(self) -> float:
        return self.d + self.r + self.f + self.s + self.h + self.i

    def as_array(self) -> np.ndarray:
        return np.array([self.d, self.r, self.f, self.s, self.h, self.i])

    @classmethod
    def from_array(cls, y) -> "PoolState":
        d, r, f, s, h, i = (float(v) for v in y)
        return cls(d, r, f, s, h, i)


@dataclass(frozen=True)
class PrimaryRouting:
    """Primary routing parameters from which all transfer fractions derive.

    Attributes
    ----------
    p_xf : float
        Fraction of retained decayed carbon (from D, R, F, S) routed to F.
    p_hs : float
        Fraction of retained H-decay routed to S.
    p_clay : float
        Clay proportion of the soil.
    r_dpm_rpm : float
        Ratio of decomposable to resistant material in plant inputs.
    pi_m : tuple of 5 floats
        Unnormalized manure routing weights to (D, R, F, S, H).
    """

    p_xf: float
    p_hs: float
    p_clay: float
    r_dpm_rpm: float
    pi_m: tuple = (0.49, 0.49, 0.0, 0.0, 0.02)

    def __post_init__(self):
        _check_unit_interval("p_xf", self.p_xf)
        _check_unit_interval("p_hs", self.p_hs)
        _check_unit_interval("p_clay", self.p_clay)
        if not math.isfinite(self.r_dpm_rpm) or self.r_dpm_rpm < 0.0:
            raise ValueError(f"r_dpm_rpm must be >= 0, got {self.r_dpm_rpm}")
        object.__setattr__(self, "pi_m", tuple(float(w) for w in self.pi_m))
        if len(self.pi_m) != 5:
            raise ValueError("pi_m must have 5 entries (D, R, F, S, H)")
        for w in self.pi_m:
            _check_finite_nonneg("pi_m entry", w)


@dataclass(frozen=True)
class DerivedRouting:
    """Transfer fractions derived from :class:`PrimaryRouting`."""

    p_pd: float
    r_co2_solid: float
    p_uf: float
    p_us: float
    p_uh: float
    p_vf: float
    p_vs: float
    p_vh: float
    p_m: tuple


@dataclass(frozen=True)
class DecayRates:
    """Marginal annual decay rates and treatment modifiers.

    The effective rate for pool X under treatment tau is
    ``kappa_X * alpha[tau]``.
    """

    kappa_d: float
    kappa_r: float
    kappa_f: float
    kappa_s: float
    kappa_h: float
    alpha: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("kappa_d", "kappa_r", "kappa_f", "kappa_s", "kappa_h"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0.0:
                raise ValueError(f"{name} must be > 0, got {v}")
        for tau, a in self.alpha.items():
            if not math.isfinite(a) or a <= 0.0:
                raise ValueError(f"alpha[{tau!r}] must be > 0, got {a}")

    def kappas(self) -> np.ndarray:
        return np.array(
            [self.kappa_d, self.kappa_r, self.kappa_f, self.kappa_s, self.kappa_h]
        )

    def effective(self, treatment: str) -> np.ndarray:
        """Effective annual rates (K_D, K_R, K_F, K_S, K_H) for a treatment."""
        if treatment not in self.alpha:
            raise KeyError(f"unknown treatment {treatment!r}")
        return self.kappas() * self.alpha[treatment]


@dataclass(frozen=True)
class Forcing:
    """Exogenous inputs for one plot-month.

    Attributes
    ----------
    p : float
        Plant carbon input (Mg C/ha/month).
    m : float
        Manure carbon input (Mg C/ha/month).
    rate_mod : float
        Decay-rate modifier encoding climate and ground cover.
    dt : float
        Step length in months.
    """

    p: float
    m: float
    rate_mod: float
    dt: float = 1.0

    def __post_init__(self):
        _check_finite_nonneg("p", self.p)
        _check_finite_nonneg("m", self.m)
        _check_finite_nonneg("rate_mod", self.rate_mod)
        if not math.isfinite(self.dt) or self.dt <= 0.0:
            raise ValueError(f"dt must be > 0, got {self.dt}")


@dataclass(frozen=True)
class NoiseParams:
    """Process variances for (D, R, F, S, H) and measurement variances
    for (TOC, POC, ROC)."""

    sigma2_process: tuple
    sigma2_meas: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "sigma2_process", tuple(float(v) for v in self.sigma2_process)
        )
        object.__setattr__(
            self, "sigma2_meas", tuple(float(v) for v in self.sigma2_meas)
        )
        if len(self.sigma2_process) != 5:
            raise ValueError("sigma2_process needs 5 entries (D, R, F, S, H)")
        if len(self.sigma2_meas) != 3:
            raise ValueError("sigma2_meas needs 3 entries (TOC, POC, ROC)")
        for v in self.sigma2_process + self.sigma2_meas:
            if not math.isfinite(v) or v <= 0.0:
                raise ValueError(f"variances must be > 0 and finite, got {v}")


@dataclass(frozen=True)
class ModelParams:
    """Full biophysical parameter set: rates, routing, and variances."""

    rates: DecayRates
    primary: PrimaryRouting
    noise: NoiseParams

    @property
    def routing(self) -> DerivedRouting:
        return derive_routing(self.primary)


def derive_routing(primary: PrimaryRouting) -> DerivedRouting:
    """Compute all derived transfer fractions from the primary parameters.

    The CO2-to-solid ratio is an empirical function of clay content; the
    retained share of any decayed carbon is ``1 / (1 + r_co2_solid)`` and
    is split between the receiving pools by ``p_xf`` and ``p_hs``.
    """
    total_pi = sum(primary.pi_m)
    if total_pi <= 0.0:
        raise ValueError("pi_m weights are all zero; manure routing undefined")
    r = primary.r_dpm_rpm
    p_pd = r / (1.0 + r)
    r_co2 = 1.67 * (1.85 + 1.6 * math.exp(-7.86 * primary.p_clay))
    retained = 1.0 / (1.0 + r_co2)
    return DerivedRouting(
        p_pd=p_pd,
        r_co2_solid=r_co2,
        p_uf=primary.p_xf * retained,
        p_us=0.0,
        p_uh=(1.0 - primary.p_xf) * retained,
        p_vf=0.0,
        p_vs=primary.p_hs * retained,
        p_vh=(1.0 - primary.p_hs) * retained,
        p_m=tuple(w / total_pi for w in primary.pi_m),
    )


def _decay_factors(rates: DecayRates, treatment: str, forcing: Forcing) -> np.ndarray:
    k = rates.effective(treatment)
    return np.exp(-forcing.rate_mod * (k / 12.0) * forcing.dt)


def decayed_masses(
    state: PoolState, rates: DecayRates, treatment: str, forcing: Forcing
):
    """Total decayed carbon from (D, R, F, S) and from H over one step.

    Returns
    -------
    (u, v) : tuple of floats
        ``u`` is the carbon decayed from the D, R, F, and S pools, ``v``
        the carbon decayed from H.
    """
    e = _decay_factors(rates, treatment, forcing)
    y = state.as_array()
    u = float(np.dot(y[:4], 1.0 - e[:4]))
    v = float(y[4] * (1.0 - e[4]))
    return u, v


def step_deterministic(
    state: PoolState,
    rates: DecayRates,
    routing: DerivedRouting,
    treatment: str,
    forcing: Forcing,
):
    """Advance the pool state one step under the mean (noise-free) dynamics.

    Returns
    -------
    (next_state, co2) : tuple
        The next :class:`PoolState` and the mass of carbon respired to the
        atmosphere over the step.  Mass balance holds:
        ``next.total() + co2 == state.total() + p + m``.
    """
    e = _decay_factors(rates, treatment, forcing)
    u, v = decayed_masses(state, rates, treatment, forcing)
    p, m = forcing.p, forcing.m
    pm = routing.p_m
    nxt = PoolState(
        d=state.d * e[0] + routing.p_pd * p + pm[0] * m,
        r=state.r * e[1] + (1.0 - routing.p_pd) * p + pm[1] * m,
        f=state.f * e[2] + routing.p_uf * u + routing.p_vf * v + pm[2] * m,
        s=state.s * e[3] + routing.p_us * u + routing.p_vs * v + pm[3] * m,
        h=state.h * e[4] + routing.p_uh * u + routing.p_vh * v + pm[4] * m,
        i=state.i,
    )
    co2 = (u + v) * routing.r_co2_solid / (1.0 + routing.r_co2_solid)
    return nxt, co2


def step_stochastic(
    state: PoolState,
    rates: DecayRates,
    routing: DerivedRouting,
    noise: NoiseParams,
    treatment: str,
    forcing: Forcing,
    eta: np.ndarray,
) -> PoolState:
    """Advance one step with multiplicative lognormal process noise.

    Each non-inert pool is the deterministic mean times
    ``exp(-sigma2/2 + sigma * eta)``, where ``eta`` holds five standard
    normal draws supplied by the caller.  The noise multiplier has mean 1,
    so the stochastic step is mean-preserving.
    """
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (5,):
        raise ValueError("eta must hold 5 standard-normal draws")
    mean, _ = step_deterministic(state, rates, routing, treatment, forcing)
    y = mean.as_array()
    sig2 = np.array(noise.sigma2_process)
    if np.any(y[:5] <= 0.0):
        bad = POOL_NAMES[int(np.argmin(y[:5]))]
        raise DegenerateStateError(
            f"pool {bad} has zero deterministic mean; lognormal noise undefined"
        )
    y = y.copy()
    y[:5] = y[:5] * np.exp(-0.5 * sig2 + np.sqrt(sig2) * eta)
    return PoolState.from_array(y)


def build_propagator(
    rates: DecayRates, routing: DerivedRouting, treatment: str, forcing: Forcing
):
    """Linear form of the deterministic step: ``next = M @ y + g``.

    Returns the 6x6 propagator matrix and the forcing vector.  Exact for
    any state since the mean dynamics are linear in the pools.
    """
    e = _decay_factors(rates, treatment, forcing)
    dec = 1.0 - e
    rt = routing
    M = np.zeros((6, 6))
    M[0, 0] = e[0]
    M[1, 1] = e[1]
    M[2, :4] = rt.p_uf * dec[:4]
    M[2, 2] += e[2]
    M[2, 4] = rt.p_vf * dec[4]
    M[3, :4] = rt.p_us * dec[:4]
    M[3, 3] += e[3]
    M[3, 4] = rt.p_vs * dec[4]
    M[4, :4] = rt.p_uh * dec[:4]
    M[4, 4] = e[4] + rt.p_vh * dec[4]
    M[5, 5] = 1.0
    g = np.zeros(6)
    g[0] = rt.p_pd * forcing.p + rt.p_m[0] * forcing.m
    g[1] = (1.0 - rt.p_pd) * forcing.p + rt.p_m[1] * forcing.m
    g[2] = rt.p_m[2] * forcing.m
    g[3] = rt.p_m[3] * forcing.m
    g[4] = rt.p_m[4] * forcing.m
    return M, g


def observe_map(state: PoolState):
    """Map a pool state to its measurable fractions (TOC, POC, ROC)."""
    toc = state.total()
    poc = state.d + state.r + state.f
    roc = state.i
    return toc, poc, roc


def flux_plot(initial: PoolState, final: PoolState, t_months) -> float:
    """Annualized atmospheric carbon flux over ``t_months`` for one plot.

    Positive values are net loss of soil carbon to the atmosphere;
    negative values indicate sequestration.
    """
    if t_months <= 0:
        raise ValueError("t_months must be > 0")
    return 12.0 * (initial.total() - final.total()) / t_months


def flux_treatment(fluxes) -> float:
    """Area-weighted average flux over the plots of one treatment.

    Parameters
    ----------
    fluxes : sequence of (flux, area) pairs
    """
    fluxes = list(fluxes)
    if not fluxes:
        raise ValueError("need at least one (flux, area) pair")
    total_area = sum(a for _, a in fluxes)
    if total_area <= 0.0 or any(a <= 0.0 for _, a in fluxes):
        raise ValueError("plot areas must be > 0")
    return sum(f * a for f, a in fluxes) / total_area
