"""Joint log-posterior of latent pool trajectories and model parameters.

The posterior combines, per plot, the lognormal observation densities and
the lognormal process-transition densities, with the priors on parameters
and initial pools on top.  Sampling happens in an unconstrained space:
parameters and initial pools through elementwise log/logit transforms
(see :mod:`.transforms`), and the latent path through its standardized
process innovations.  The innovation coordinates are an exact
reparameterization of the log pool states, chosen because they decouple
the months of a trajectory and let Hamiltonian trajectories stay short;
the constrained draw vector still reports actual pool masses.

``log_process`` and ``log_data`` are also provided as plain reference
implementations built on the scalar pool dynamics; tests hold the two
routes together.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import special

import jax

jax.config.update("jax_enable_x64", True)

import jax.numpy as jnp  # noqa: E402
from jax import lax  # noqa: E402

from ..distributions import InverseGamma, LogNormal, TruncNormal, sample
from ..pools import (
    POOL_NAMES,
    ModelParams,
    PoolState,
    observe_map,
    step_deterministic,
)
from ..priortable import (
    KAPPA_NAMES,
    PI_M_NAMES,
    SIGMA2_MEAS_NAMES,
    SIGMA2_PROCESS_NAMES,
    PriorTable,
    init_name,
    log_alpha_name,
)
from .data import FRACTION_NAMES, LatentTrajectory, PlotData
from .transforms import IndexMap, coord_for_support

__all__ = ["Posterior", "build_posterior", "log_process", "log_data"]

_LOG2PI = math.log(2.0 * math.pi)


def _normal_logpdf(x, mean, var):
    return -0.5 * ((x - mean) ** 2 / var + jnp.log(var) + _LOG2PI)


def log_process(
    traj: LatentTrajectory, params: ModelParams, forcing, treatment: str
) -> float:
    """Log density of the latent log-pool path under the process model.

    Sums, over transitions and non-inert pools, the normal density of the
    next log pool around the log of its deterministic mean (offset by
    -sigma2/2).  A nonpositive deterministic mean yields -inf.
    """
    forcing = tuple(forcing)
    if len(forcing) != traj.n_months:
        raise ValueError("forcing length must equal the number of transitions")
    routing = params.routing
    s2 = np.array(params.noise.sigma2_process)
    total = 0.0
    for t in range(traj.n_months):
        mean, _ = step_deterministic(
            traj[t], params.rates, routing, treatment, forcing[t]
        )
        m5 = mean.as_array()[:5]
        if np.any(m5 <= 0.0):
            return -math.inf
        logx = np.log(traj[t + 1].as_array()[:5])
        z = logx - (np.log(m5) - 0.5 * s2)
        total += float(np.sum(-0.5 * (z * z / s2 + np.log(s2) + _LOG2PI)))
        if traj[t + 1].i != traj[t].i:
            raise ValueError("inert pool must be constant along a trajectory")
    return total


def log_data(obs: PlotData, traj: LatentTrajectory, sigma2_meas) -> float:
    """Log density of a plot's observations given its latent trajectory."""
    if traj.n_months < max((o.month for o in obs.observations), default=0):
        raise ValueError("trajectory too short for the observation months")
    s2 = dict(zip(FRACTION_NAMES, sigma2_meas))
    total = 0.0
    for o in obs.observations:
        fractions = dict(zip(FRACTION_NAMES, observe_map(traj[o.month])))
        v = s2[o.kind]
        log_z = math.log(o.value)
        z = log_z - (math.log(fractions[o.kind]) - 0.5 * v)
        total += -0.5 * (z * z / v + math.log(v) + _LOG2PI) - log_z
    return total


@dataclass(frozen=True)
class _PlotStatic:
    """Precomputed arrays for one plot's term in the posterior."""

    treat_index: int
    n_months: int
    p: np.ndarray
    m: np.ndarray
    rate_mod: np.ndarray
    dt: np.ndarray
    obs_month: np.ndarray
    obs_kind: np.ndarray  # 0 TOC, 1 POC, 2 ROC
    obs_logz: np.ndarray
    x0_slice: slice
    latent_slice: slice


class Posterior:
    """Unconstrained-space log posterior for one experiment.

    Parameters
    ----------
    plots : list of PlotData
    priors : PriorTable
        Must carry one treatment-modifier prior per treatment present and
        one initial-condition prior per plot position.
    n_workers : int
        Thread count for the per-plot map in :meth:`log_posterior`.  The
        reduction over plots is always in plot order, so the value is
        identical for any worker count.
    """

    def __init__(self, plots, priors: PriorTable, n_workers: int = 1):
        # canonical plot-id order makes the reduction (and hence the value)
        # independent of the order plots were supplied in
        self.plots = sorted(plots, key=lambda p: p.plot_id)
        if not self.plots:
            raise ValueError("need at least one plot")
        ids = [p.plot_id for p in self.plots]
        if len(set(ids)) != len(ids):
            raise ValueError("plot ids must be unique")
        self.priors = priors
        self.n_workers = max(1, int(n_workers))
        self.treatments = tuple(priors.treatments)
        for plot in self.plots:
            if plot.treatment not in self.treatments:
                raise ValueError(
                    f"plot {plot.plot_id} has treatment {plot.treatment!r} "
                    "with no prior entry"
                )
        self._build_coords()
        self._build_prior_arrays()
        self._logp_jit = jax.jit(self._logp_impl)
        self._logp_grad_jit = jax.jit(jax.value_and_grad(self._logp_impl))
        self._plot_term_jits = None

    # ------------------------------------------------------------------
    # layout

    def _build_coords(self):
        priors = self.priors
        coords = []
        prior_names = []  # prior-table key, aligned with the coords above

        def from_prior(coord_name, prior_name=None):
            d = priors[prior_name or coord_name]
            lo, hi = d.support
            coords.append(coord_for_support(coord_name, lo, hi))
            prior_names.append(prior_name or coord_name)

        for name in KAPPA_NAMES:
            from_prior(name)
        for tau in self.treatments:
            from_prior(log_alpha_name(tau))
        for name in PI_M_NAMES:
            from_prior(name)
        for name in ("p_xf", "p_hs", "p_clay", "r_dpm_rpm"):
            from_prior(name)
        for name in SIGMA2_PROCESS_NAMES + SIGMA2_MEAS_NAMES:
            from_prior(name)
        self._n_global = len(coords)

        for p_idx, plot in enumerate(self.plots):
            for pool in POOL_NAMES:
                from_prior(
                    f"init[{plot.plot_id},{pool}]", init_name(p_idx, pool)
                )
        self.index_map = IndexMap(coords)
        self._n_elem = len(coords)
        self._prior_names = prior_names

        names = list(self.index_map.names)
        kind_codes = {"TOC": 0, "POC": 1, "ROC": 2}
        self._plot_static = []
        offset = self._n_elem
        for p_idx, plot in enumerate(self.plots):
            lat_start = offset
            for t in range(1, plot.n_months + 1):
                for pool in POOL_NAMES[:5]:
                    names.append(f"pool[{plot.plot_id},{t},{pool}]")
            offset += 5 * plot.n_months
            obs = sorted(plot.observations, key=lambda o: (o.month, o.kind))
            x0_start = self._n_global + 6 * p_idx
            self._plot_static.append(
                _PlotStatic(
                    treat_index=self.treatments.index(plot.treatment),
                    n_months=plot.n_months,
                    p=np.array([f.p for f in plot.forcing]),
                    m=np.array([f.m for f in plot.forcing]),
                    rate_mod=np.array([f.rate_mod for f in plot.forcing]),
                    dt=np.array([f.dt for f in plot.forcing]),
                    obs_month=np.array([o.month for o in obs], dtype=int),
                    obs_kind=np.array(
                        [kind_codes[o.kind] for o in obs], dtype=int
                    ),
                    obs_logz=np.log([o.value for o in obs]),
                    x0_slice=slice(x0_start, x0_start + 6),
                    latent_slice=slice(lat_start, offset),
                )
            )
        self.names = names
        self.dim = len(names)

    def _build_prior_arrays(self):
        tn_idx, tn_mu, tn_sigma, tn_lognorm = [], [], [], []
        ig_idx, ig_shape, ig_scale, ig_const = [], [], [], []
        ln_idx, ln_mu, ln_s2 = [], [], []
        for k, name in enumerate(self._prior_names):
            d = self.priors[name]
            if isinstance(d, TruncNormal):
                tn_idx.append(k)
                tn_mu.append(d.mu)
                tn_sigma.append(d.sigma)
                tn_lognorm.append(d._log_normalizer())
            elif isinstance(d, InverseGamma):
                ig_idx.append(k)
                ig_shape.append(d.shape)
                ig_scale.append(d.scale)
                ig_const.append(
                    d.shape * math.log(d.scale) - float(special.gammaln(d.shape))
                )
            elif isinstance(d, LogNormal):
                ln_idx.append(k)
                ln_mu.append(d.mu)
                ln_s2.append(d.sigma2)
            else:
                raise TypeError(f"unsupported prior type for {name}")
        self._tn = (np.array(tn_idx, dtype=int), np.array(tn_mu),
                    np.array(tn_sigma), np.array(tn_lognorm))
        self._ig = (np.array(ig_idx, dtype=int), np.array(ig_shape),
                    np.array(ig_scale), np.array(ig_const))
        self._ln = (np.array(ln_idx, dtype=int), np.array(ln_mu),
                    np.array(ln_s2))

        im = self.index_map
        self._jx_is_log = jnp.array(im._is_log)
        self._jx_lo = jnp.array(im.lo)
        self._jx_width = jnp.array(np.where(im._is_log, 1.0, im.width))

    # ------------------------------------------------------------------
    # jax implementation

    def _constrain_elem_jnp(self, u_elem):
        x_log = self._jx_lo + jnp.exp(u_elem)
        x_int = self._jx_lo + self._jx_width * jax.nn.sigmoid(u_elem)
        return jnp.where(self._jx_is_log, x_log, x_int)

    def _log_jacobian_jnp(self, u_elem):
        jac_log = u_elem
        jac_int = (
            jnp.log(self._jx_width)
            - jax.nn.softplus(-u_elem)
            - jax.nn.softplus(u_elem)
        )
        return jnp.sum(jnp.where(self._jx_is_log, jac_log, jac_int))

    def _global_slices(self, x_elem):
        n_treat = len(self.treatments)
        i = 0
        kappa = x_elem[i : i + 5]
        i += 5
        log_alpha = x_elem[i : i + n_treat]
        i += n_treat
        pi_m = x_elem[i : i + 5]
        i += 5
        p_xf, p_hs, p_clay, r_dpm = (
            x_elem[i], x_elem[i + 1], x_elem[i + 2], x_elem[i + 3],
        )
        i += 4
        s2_proc = x_elem[i : i + 5]
        i += 5
        s2_meas = x_elem[i : i + 3]
        return kappa, log_alpha, pi_m, p_xf, p_hs, p_clay, r_dpm, s2_proc, s2_meas

    def _plot_scan(self, x_elem, z, st: _PlotStatic):
        """Reconstruct one plot's non-inert pools from its innovations.

        Returns (pools, log density of the innovations), where pools has
        shape (T+1, 5).
        """
        kappa, log_alpha, pi_m, p_xf, p_hs, p_clay, r_dpm, s2p, _ = (
            self._global_slices(x_elem)
        )
        alpha = jnp.exp(log_alpha[st.treat_index])
        K = kappa * alpha
        p_pd = r_dpm / (1.0 + r_dpm)
        r_co2 = 1.67 * (1.85 + 1.6 * jnp.exp(-7.86 * p_clay))
        retained = 1.0 / (1.0 + r_co2)
        p_uf = p_xf * retained
        p_uh = (1.0 - p_xf) * retained
        p_vs = p_hs * retained
        p_vh = (1.0 - p_hs) * retained
        p_m = pi_m / jnp.sum(pi_m)

        x0 = x_elem[st.x0_slice]
        z = z.reshape(st.n_months, 5)
        sig = jnp.sqrt(s2p)

        def step(y5, inp):
            p_in, m_in, rmod, dt, z_t = inp
            e = jnp.exp(-rmod * (K / 12.0) * dt)
            u_dec = jnp.dot(y5[:4], 1.0 - e[:4])
            v_dec = y5[4] * (1.0 - e[4])
            mean = jnp.stack(
                [
                    y5[0] * e[0] + p_pd * p_in + p_m[0] * m_in,
                    y5[1] * e[1] + (1.0 - p_pd) * p_in + p_m[1] * m_in,
                    y5[2] * e[2] + p_uf * u_dec + p_m[2] * m_in,
                    y5[3] * e[3] + p_vs * v_dec + p_m[3] * m_in,
                    y5[4] * e[4] + p_uh * u_dec + p_vh * v_dec + p_m[4] * m_in,
                ]
            )
            y_next = mean * jnp.exp(-0.5 * s2p + sig * z_t)
            return y_next, y_next

        inputs = (
            jnp.array(st.p),
            jnp.array(st.m),
            jnp.array(st.rate_mod),
            jnp.array(st.dt),
            z,
        )
        _, ys = lax.scan(step, x0[:5], inputs)
        pools = jnp.concatenate([x0[None, :5], ys], axis=0)
        lp = -0.5 * jnp.sum(z * z) - 0.5 * z.size * _LOG2PI
        return pools, lp

    def _plot_term(self, x_elem, z, st: _PlotStatic):
        pools, lp = self._plot_scan(x_elem, z, st)
        if st.obs_month.size:
            s2m = self._global_slices(x_elem)[8]
            i0 = x_elem[st.x0_slice][5]
            toc = jnp.sum(pools, axis=1) + i0
            poc = jnp.sum(pools[:, :3], axis=1)
            roc = jnp.full(toc.shape, i0)
            frac = jnp.stack([toc, poc, roc], axis=1)
            sel = frac[st.obs_month, st.obs_kind]
            v = s2m[st.obs_kind]
            lp += jnp.sum(
                _normal_logpdf(st.obs_logz, jnp.log(sel) - 0.5 * v, v)
                - st.obs_logz
            )
        return lp

    def _log_prior(self, x_elem):
        lp = 0.0
        idx, mu, sigma, lognorm = self._tn
        if idx.size:
            zs = (x_elem[idx] - mu) / sigma
            lp += jnp.sum(-0.5 * (zs * zs + _LOG2PI) - jnp.log(sigma) - lognorm)
        idx, shape, scale, const = self._ig
        if idx.size:
            xv = x_elem[idx]
            lp += jnp.sum(const - (shape + 1.0) * jnp.log(xv) - scale / xv)
        idx, mu, s2 = self._ln
        if idx.size:
            xv = x_elem[idx]
            lp += jnp.sum(_normal_logpdf(jnp.log(xv), mu, s2) - jnp.log(xv))
        return lp

    def _logp_impl(self, u):
        u_elem = u[: self._n_elem]
        x_elem = self._constrain_elem_jnp(u_elem)
        lp = self._log_prior(x_elem) + self._log_jacobian_jnp(u_elem)
        for st in self._plot_static:
            lp += self._plot_term(x_elem, u[st.latent_slice], st)
        return lp

    # ------------------------------------------------------------------
    # numpy reconstruction (for constrain/unconstrain of latent coords)

    def _values_from_elem(self, x_elem):
        return dict(zip(self._prior_names, x_elem))

    def params_from_values(self, values: dict) -> ModelParams:
        from ..simulate import params_from_values

        return params_from_values(values, self.treatments)

    def _plot_params(self, x_elem):
        values = {
            name: x_elem[k] for k, name in enumerate(self._prior_names)
        }
        return self.params_from_values(values)

    def constrain(self, u) -> np.ndarray:
        """Model-scale vector: parameters, initial pools, and the pool
        masses implied by the innovation coordinates."""
        u = np.asarray(u, dtype=float)
        x = np.empty(self.dim)
        x_elem = self.index_map.constrain(u[: self._n_elem])
        x[: self._n_elem] = x_elem
        params = self._plot_params(x_elem)
        routing = params.routing
        s2p = np.array(params.noise.sigma2_process)
        sig = np.sqrt(s2p)
        for plot, st in zip(self.plots, self._plot_static):
            state = PoolState.from_array(x_elem[st.x0_slice])
            z = u[st.latent_slice].reshape(st.n_months, 5)
            out = np.empty_like(z)
            for t, f in enumerate(plot.forcing):
                mean, _ = step_deterministic(
                    state, params.rates, routing, plot.treatment, f
                )
                y = mean.as_array()[:5] * np.exp(-0.5 * s2p + sig * z[t])
                out[t] = y
                state = PoolState.from_array(np.append(y, state.i))
            x[st.latent_slice] = out.ravel()
        return x

    def unconstrain(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.empty(self.dim)
        x_elem = x[: self._n_elem]
        u[: self._n_elem] = self.index_map.unconstrain(x_elem)
        params = self._plot_params(x_elem)
        routing = params.routing
        s2p = np.array(params.noise.sigma2_process)
        sig = np.sqrt(s2p)
        for plot, st in zip(self.plots, self._plot_static):
            state = PoolState.from_array(x_elem[st.x0_slice])
            pools = x[st.latent_slice].reshape(st.n_months, 5)
            z = np.empty_like(pools)
            for t, f in enumerate(plot.forcing):
                mean, _ = step_deterministic(
                    state, params.rates, routing, plot.treatment, f
                )
                m5 = mean.as_array()[:5]
                if np.any(m5 <= 0.0) or np.any(pools[t] <= 0.0):
                    raise ValueError(
                        f"nonpositive pool or mean at plot {plot.plot_id}, "
                        f"month {t + 1}"
                    )
                z[t] = (np.log(pools[t]) - np.log(m5) + 0.5 * s2p) / sig
                state = PoolState.from_array(np.append(pools[t], state.i))
            u[st.latent_slice] = z.ravel()
        return u

    # ------------------------------------------------------------------
    # public surface

    def log_posterior(self, u) -> float:
        """Posterior log density at an unconstrained point.

        Per-plot terms are mapped (possibly over a thread pool) and reduced
        in plot order, so the result does not depend on the worker count.
        """
        u = jnp.asarray(u, dtype=jnp.float64)
        if self._plot_term_jits is None:

            def make(st):
                def term(uu):
                    x_elem = self._constrain_elem_jnp(uu[: self._n_elem])
                    return self._plot_term(x_elem, uu[st.latent_slice], st)

                return jax.jit(term)

            self._plot_term_jits = [make(st) for st in self._plot_static]
        u_elem = u[: self._n_elem]
        x_elem = self._constrain_elem_jnp(u_elem)
        shared = self._log_prior(x_elem) + self._log_jacobian_jnp(u_elem)
        if self.n_workers > 1:
            with ThreadPoolExecutor(max_workers=self.n_workers) as pool:
                terms = list(pool.map(lambda f: f(u), self._plot_term_jits))
        else:
            terms = [f(u) for f in self._plot_term_jits]
        total = float(shared)
        for t in terms:  # fixed plot-order reduction
            total += float(t)
        return total

    def grad_log_posterior(self, u) -> np.ndarray:
        value, grad = self._logp_grad_jit(jnp.asarray(u, dtype=jnp.float64))
        if not np.isfinite(float(value)):
            raise ValueError("gradient requested where the posterior is -inf")
        return np.asarray(grad)

    def logp_and_grad(self, u):
        value, grad = self._logp_grad_jit(jnp.asarray(u, dtype=jnp.float64))
        return float(value), np.asarray(grad)

    def draw_params(self, rng) -> dict:
        """One joint draw of all prior-carrying parameters, by name."""
        return {
            name: float(sample(self.priors[name], rng))
            for name in self._prior_names
        }

    def initial_point(self, rng) -> np.ndarray:
        """Unconstrained starting point drawn from the priors.

        Parameters and initial pools come from their priors; the
        innovation coordinates are standard-normal draws, which is
        exactly a stochastic forward simulation of the latent path under
        the drawn parameters.
        """
        values = self.draw_params(rng)
        u = np.empty(self.dim)
        x_elem = np.array([values[name] for name in self._prior_names])
        # tiny floor keeps log transforms finite for near-zero draws
        x_elem = np.maximum(x_elem, 1e-6)
        u[: self._n_elem] = self.index_map.unconstrain(x_elem)
        u[self._n_elem :] = rng.standard_normal(self.dim - self._n_elem)
        return u


def build_posterior(plots, priors: PriorTable, n_workers: int = 1) -> Posterior:
    return Posterior(plots, priors, n_workers=n_workers)
