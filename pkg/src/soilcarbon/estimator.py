"""Estimator-style front end over the sampling pipeline.

Mirrors the scikit-learn conventions: constructor takes only
hyperparameters, ``fit`` runs the sampler and stores results on
trailing-underscore attributes, ``get_params``/``set_params`` expose the
configuration for grid-style reuse.
"""

from __future__ import annotations

from .diagnostics import flux_posterior, rhat, summarize
from .inference.sampling import SamplerConfig, run_hmc
from .io import ValidationError
from .priortable import apply_scenario, default_priors

__all__ = ["SoilCarbonSampler"]


class SoilCarbonSampler:
    """Bayesian fit of the six-pool model to one experiment.

    Parameters mirror :class:`SamplerConfig` plus the prior scenario.
    ``fit`` accepts a list of PlotData; priors default to the standard
    table derived from the plots' treatments.
    """

    def __init__(
        self,
        n_chains: int = 6,
        n_warmup: int = 20000,
        n_iter: int = 50000,
        thin: int = 10,
        seed: int = 0,
        max_depth: int = 10,
        target_accept: float = 0.8,
        n_workers: int = 1,
        scenario: str = "N",
    ):
        self.n_chains = n_chains
        self.n_warmup = n_warmup
        self.n_iter = n_iter
        self.thin = thin
        self.seed = seed
        self.max_depth = max_depth
        self.target_accept = target_accept
        self.n_workers = n_workers
        self.scenario = scenario

    _param_names = (
        "n_chains", "n_warmup", "n_iter", "thin", "seed",
        "max_depth", "target_accept", "n_workers", "scenario",
    )

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names}

    def set_params(self, **params) -> "SoilCarbonSampler":
        for name, value in params.items():
            if name not in self._param_names:
                raise ValueError(f"unknown parameter {name!r}")
            setattr(self, name, value)
        return self

    def _config(self) -> SamplerConfig:
        return SamplerConfig(
            n_chains=self.n_chains,
            n_warmup=self.n_warmup,
            n_iter=self.n_iter,
            thin=self.thin,
            seed=self.seed,
            max_depth=self.max_depth,
            target_accept=self.target_accept,
            n_workers=self.n_workers,
        )

    def fit(self, plots, priors=None) -> "SoilCarbonSampler":
        """Sample the posterior for an experiment.

        Sets ``chains_`` (list of ChainDraws), ``priors_``, ``plots_``
        and ``rhat_`` (per reported coordinate).
        """
        plots = list(plots)
        if not plots:
            raise ValidationError("fit needs at least one plot")
        if priors is None:
            treatments = tuple(dict.fromkeys(p.treatment for p in plots))
            priors = apply_scenario(
                default_priors(n_plots=len(plots), treatments=treatments),
                self.scenario,
            )
        self.plots_ = plots
        self.priors_ = priors
        self.chains_ = run_hmc(plots, priors, self._config())
        self.rhat_ = {}
        for name in self.chains_[0].names:
            if name.startswith("pool["):
                continue
            try:
                self.rhat_[name] = rhat(
                    [c.column(name) for c in self.chains_]
                )
            except ValueError:
                self.rhat_[name] = float("nan")
        return self

    def _check_fitted(self):
        if not hasattr(self, "chains_"):
            raise ValueError("call fit before requesting results")

    def summary(self, quantity, name=None):
        """SummaryRow of a coordinate or derived quantity."""
        self._check_fitted()
        return summarize(self.chains_, quantity, name=name)

    def flux(self) -> dict:
        """Treatment-level flux posterior summaries."""
        self._check_fitted()
        return flux_posterior(self.chains_, self.plots_)
