"""Prior distribution families: truncated normal, inverse gamma, lognormal.

These are thin, validated wrappers with a uniform ``log_pdf``/``sample``
surface, plus the quantile-matched inverse-gamma constructor used to build
priors on multiplicative process-noise variances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special, stats

__all__ = [
    "TruncNormal",
    "InverseGamma",
    "LogNormal",
    "log_pdf",
    "sample",
    "fit_ig_to_multiplier_band",
]


@dataclass(frozen=True)
class TruncNormal:
    """Normal(mu, sigma^2) truncated to [lo, hi]; bounds may be infinite."""

    mu: float
    sigma: float
    lo: float = -math.inf
    hi: float = math.inf

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")
        if self._log_normalizer() == -math.inf:
            raise ValueError("truncation interval has zero probability mass")

    def _std_bounds(self):
        return (self.lo - self.mu) / self.sigma, (self.hi - self.mu) / self.sigma

    def _log_normalizer(self) -> float:
        a, b = self._std_bounds()
        # log(Phi(b) - Phi(a)), computed in log space for far-tail intervals
        la, lb = special.log_ndtr(a), special.log_ndtr(b)
        if lb == la:
            return -math.inf
        return lb + math.log1p(-math.exp(la - lb))

    def log_pdf(self, x: float) -> float:
        if x < self.lo or x > self.hi:
            return -math.inf
        z = (x - self.mu) / self.sigma
        return (
            -0.5 * z * z
            - 0.5 * math.log(2.0 * math.pi)
            - math.log(self.sigma)
            - self._log_normalizer()
        )

    def sample(self, rng: np.random.Generator, size=None):
        a, b = self._std_bounds()
        return stats.truncnorm.rvs(
            a, b, loc=self.mu, scale=self.sigma, size=size, random_state=rng
        )

    def cdf(self, x: float) -> float:
        a, b = self._std_bounds()
        return stats.truncnorm.cdf(x, a, b, loc=self.mu, scale=self.sigma)

    @property
    def support(self):
        return self.lo, self.hi


@dataclass(frozen=True)
class InverseGamma:
    """Inverse gamma with density proportional to x^(-shape-1) exp(-scale/x)."""

    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0.0 and self.scale > 0.0):
            raise ValueError(
                f"shape and scale must be > 0, got ({self.shape}, {self.scale})"
            )

    def log_pdf(self, x: float) -> float:
        if x <= 0.0:
            return -math.inf
        a, b = self.shape, self.scale
        return a * math.log(b) - special.gammaln(a) - (a + 1.0) * math.log(x) - b / x

    def sample(self, rng: np.random.Generator, size=None):
        return stats.invgamma.rvs(
            self.shape, scale=self.scale, size=size, random_state=rng
        )

    def cdf(self, x: float) -> float:
        return stats.invgamma.cdf(x, self.shape, scale=self.scale)

    @property
    def mean(self) -> float:
        if self.shape <= 1.0:
            return math.inf
        return self.scale / (self.shape - 1.0)

    @property
    def support(self):
        return 0.0, math.inf


@dataclass(frozen=True)
class LogNormal:
    """exp(Normal(mu, sigma2))."""

    mu: float
    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0.0:
            raise ValueError(f"sigma2 must be > 0, got {self.sigma2}")

    def log_pdf(self, x: float) -> float:
        if x <= 0.0:
            return -math.inf
        z2 = (math.log(x) - self.mu) ** 2 / self.sigma2
        return -0.5 * z2 - 0.5 * math.log(2.0 * math.pi * self.sigma2) - math.log(x)

    def sample(self, rng: np.random.Generator, size=None):
        return np.exp(rng.normal(self.mu, math.sqrt(self.sigma2), size=size))

    def cdf(self, x: float) -> float:
        if x <= 0.0:
            return 0.0
        return float(special.ndtr((math.log(x) - self.mu) / math.sqrt(self.sigma2)))

    @property
    def support(self):
        return 0.0, math.inf


def log_pdf(dist, x: float) -> float:
    """Log density of ``dist`` at ``x`` (-inf outside the support)."""
    return dist.log_pdf(x)


def sample(dist, rng: np.random.Generator, size=None):
    """Draw from ``dist`` using the caller's RNG stream."""
    return dist.sample(rng, size=size)


def _multiplier_tail_probs(ig: InverseGamma, lo_mult: float, hi_mult: float):
    """Tail probabilities of the noise multiplier exp(eta) under ``ig``.

    With sigma2 ~ ig and eta | sigma2 ~ N(-sigma2/2, sigma2),
    Pr(e^eta < c) = E[ Phi((log c + sigma2/2) / sqrt(sigma2)) ].  The
    expectation is taken by quadrature over the inverse-gamma density.
    """

    def integrand_factory(c, upper):
        log_c = math.log(c)

        def f(s2):
            z = (log_c + 0.5 * s2) / math.sqrt(s2)
            p = special.ndtr(z)
            if upper:
                p = 1.0 - p
            return p * math.exp(ig.log_pdf(s2))

        return f

    center = ig.scale / (ig.shape + 1.0)  # mode

    def split_quad(f):
        left, _ = integrate.quad(f, 0.0, center, limit=200)
        right, _ = integrate.quad(f, center, math.inf, limit=200)
        return left + right

    lo_p = split_quad(integrand_factory(lo_mult, upper=False))
    hi_p = split_quad(integrand_factory(hi_mult, upper=True))
    return lo_p, hi_p


def fit_ig_to_multiplier_band(
    lo_mult: float, hi_mult: float, tail_prob: float
) -> InverseGamma:
    """Find an inverse-gamma prior on sigma2 matching a multiplier band.

    Solves for (shape, scale) such that the lognormal noise multiplier
    exp(eta), with eta ~ N(-sigma2/2, sigma2) and sigma2 ~ IG(shape, scale),
    falls below ``lo_mult`` and above ``hi_mult`` each with probability
    approximately ``tail_prob``.
    """
    if not (0.0 < lo_mult < 1.0 < hi_mult):
        raise ValueError("need 0 < lo_mult < 1 < hi_mult")
    if not (0.0 < tail_prob < 0.5):
        raise ValueError("need 0 < tail_prob < 0.5")

    # Moment-matched starting point: a near-degenerate sigma2 whose normal
    # quantile hits the midpoint of the two band edges.
    z = -special.ndtri(tail_prob)
    sigma0 = 0.5 * (math.log(hi_mult) - math.log(lo_mult)) / z
    s2_target = sigma0 * sigma0

    def residual(u):
        log_shape, log_scale = u
        ig = InverseGamma(math.exp(log_shape), math.exp(log_scale))
        lo_p, hi_p = _multiplier_tail_probs(ig, lo_mult, hi_mult)
        return [
            math.log(max(lo_p, 1e-300)) - math.log(tail_prob),
            math.log(max(hi_p, 1e-300)) - math.log(tail_prob),
        ]

    best = None
    for shape0 in (40.0, 10.0, 100.0, 3.0):
        x0 = [math.log(shape0), math.log(s2_target * max(shape0 - 1.0, 0.5))]
        sol = optimize.least_squares(residual, x0, method="lm")
        ig = InverseGamma(math.exp(sol.x[0]), math.exp(sol.x[1]))
        lo_p, hi_p = _multiplier_tail_probs(ig, lo_mult, hi_mult)
        err = max(abs(lo_p / tail_prob - 1.0), abs(hi_p / tail_prob - 1.0))
        if best is None or err < best[0]:
            best = (err, ig, lo_p, hi_p)
        if err <= 0.2:
            return ig
    # An exact two-tail match can be structurally out of reach (the -sigma2/2
    # mean shift keeps the lower tail above the upper one for wide bands);
    # accept the best compromise while both tails stay within a factor of 2.
    err, ig, lo_p, hi_p = best
    if tail_prob / 2.0 <= lo_p <= 2.0 * tail_prob and (
        tail_prob / 2.0 <= hi_p <= 2.0 * tail_prob
    ):
        return ig
    raise ValueError(
        f"no inverse gamma achieves both multiplier tails near {tail_prob} "
        f"for band ({lo_mult}, {hi_mult}); best ({lo_p:.3g}, {hi_p:.3g})"
    )
