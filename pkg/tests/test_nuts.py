"""NUTS kernel checks against targets with known moments."""

import math

import numpy as np
import pytest

from soilcarbon.inference.nuts import (
    NutsConfig,
    find_reasonable_epsilon,
    nuts_chain,
)
from soilcarbon.inference.sampling import ChainDraws, SamplerConfig, run_hmc


class GaussianTarget:
    """Multivariate normal with identity constraint map."""

    def __init__(self, mean, cov):
        self.mean = np.asarray(mean, dtype=float)
        self.cov = np.asarray(cov, dtype=float)
        self.prec = np.linalg.inv(self.cov)
        self.dim = self.mean.size
        self.names = [f"x{k}" for k in range(self.dim)]

    def logp_and_grad(self, u):
        d = u - self.mean
        g = -self.prec @ d
        return float(-0.5 * d @ self.prec @ d), g

    def initial_point(self, rng):
        return rng.standard_normal(self.dim)

    def constrain(self, u):
        return np.asarray(u, dtype=float)


def std_normal(dim):
    return GaussianTarget(np.zeros(dim), np.eye(dim))


def run_chain(target, seed, n_warmup=500, n_iter=2000, thin=1, **kw):
    rng = np.random.default_rng(seed)
    u0 = target.initial_point(rng)
    return nuts_chain(
        target.logp_and_grad, u0, n_warmup, n_iter, thin, rng, NutsConfig(**kw)
    )


class TestKernel:
    def test_standard_normal_moments(self):
        target = std_normal(3)
        draws, stats = run_chain(target, seed=1)
        assert draws.shape == (2000, 3)
        assert np.all(np.abs(draws.mean(axis=0)) < 0.15)
        assert np.all(np.abs(draws.var(axis=0) - 1.0) < 0.2)
        assert stats.n_divergent == 0
        assert 0.6 < stats.mean_accept <= 1.0
        assert stats.step_size > 0.0

    def test_correlated_gaussian_moments(self):
        mean = np.array([1.0, -2.0])
        cov = np.array([[2.0, 1.2], [1.2, 1.0]])
        target = GaussianTarget(mean, cov)
        draws, _ = run_chain(target, seed=2, n_iter=4000)
        np.testing.assert_allclose(draws.mean(axis=0), mean, atol=0.15)
        np.testing.assert_allclose(np.cov(draws.T), cov, atol=0.35)

    def test_mass_adaptation_learns_scales(self):
        cov = np.diag([100.0, 0.01])
        target = GaussianTarget(np.zeros(2), cov)
        draws, stats = run_chain(target, seed=3, n_warmup=800, n_iter=3000)
        ratio = stats.inv_mass[0] / stats.inv_mass[1]
        # the adapted metric should reflect the 1e4 variance ratio
        assert ratio > 100.0
        np.testing.assert_allclose(draws.var(axis=0), [100.0, 0.01], rtol=0.3)

    def test_deterministic_given_seed(self):
        target = std_normal(2)
        d1, s1 = run_chain(target, seed=7, n_warmup=100, n_iter=200)
        d2, s2 = run_chain(target, seed=7, n_warmup=100, n_iter=200)
        np.testing.assert_array_equal(d1, d2)
        assert s1.step_size == s2.step_size

    def test_thinning_subsamples_the_same_path(self):
        target = std_normal(2)
        full, _ = run_chain(target, seed=11, n_warmup=100, n_iter=200, thin=1)
        thinned, _ = run_chain(target, seed=11, n_warmup=100, n_iter=200, thin=5)
        assert thinned.shape == (40, 2)
        np.testing.assert_array_equal(thinned, full[4::5])

    def test_rejects_infinite_start(self):
        target = std_normal(2)

        def bad(u):
            return -math.inf, np.zeros(2)

        rng = np.random.default_rng(0)
        with pytest.raises(ValueError, match="initial point"):
            nuts_chain(bad, np.zeros(2), 10, 10, 1, rng)

    def test_find_reasonable_epsilon(self):
        target = std_normal(5)
        rng = np.random.default_rng(4)
        eps = find_reasonable_epsilon(target.logp_and_grad, np.zeros(5), rng)
        assert 0.0 < eps < 1e3

    def test_config_validation(self):
        with pytest.raises(ValueError):
            NutsConfig(target_accept=1.5)
        with pytest.raises(ValueError):
            NutsConfig(max_depth=0)


class TestRunHmc:
    def test_target_override_runs_chains(self):
        target = std_normal(2)
        config = SamplerConfig(
            n_chains=3, n_warmup=200, n_iter=400, thin=2, seed=5
        )
        chains = run_hmc(None, None, config, target=target)
        assert [c.chain_id for c in chains] == [0, 1, 2]
        for c in chains:
            assert isinstance(c, ChainDraws)
            assert c.draws.shape == (200, 2)
            assert c.names == target.names
        pooled = np.concatenate([c.draws for c in chains])
        assert np.all(np.abs(pooled.mean(axis=0)) < 0.2)

    def test_chains_differ_but_runs_repeat(self):
        target = std_normal(2)
        config = SamplerConfig(n_chains=2, n_warmup=100, n_iter=100, thin=1, seed=9)
        a = run_hmc(None, None, config, target=target)
        b = run_hmc(None, None, config, target=target)
        assert not np.array_equal(a[0].draws, a[1].draws)
        np.testing.assert_array_equal(a[0].draws, b[0].draws)
        np.testing.assert_array_equal(a[1].draws, b[1].draws)

    def test_column_lookup(self):
        target = std_normal(2)
        config = SamplerConfig(n_chains=1, n_warmup=50, n_iter=50, thin=1, seed=2)
        (chain,) = run_hmc(None, None, config, target=target)
        np.testing.assert_array_equal(chain.column("x1"), chain.draws[:, 1])

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SamplerConfig(n_iter=100, thin=7)
        with pytest.raises(ValueError):
            SamplerConfig(n_chains=0)
