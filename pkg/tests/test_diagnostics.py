"""Diagnostics: R-hat oracle, summaries, flux pipeline, trend surface."""

import math

import numpy as np
import pytest

from soilcarbon.diagnostics import (
    SummaryRow,
    flux_draws,
    flux_posterior,
    rhat,
    summarize,
    trend_surface_diagnostic,
)
from soilcarbon.inference import PlotData
from soilcarbon.pools import POOL_NAMES, Forcing


def rhat_reference(chains):
    """Straightforward reimplementation used as a dual oracle."""
    chains = [np.asarray(c, float) for c in chains]
    m = len(chains)
    n = chains[0].size
    means = [c.mean() for c in chains]
    grand = sum(means) / m
    b = n / (m - 1) * sum((mu - grand) ** 2 for mu in means)
    w = sum(c.var(ddof=1) for c in chains) / m
    var_plus = (n - 1) / n * w + b / n
    return math.sqrt(var_plus / w)


class TestRhat:
    def test_identical_chains_exact_value(self):
        rng = np.random.default_rng(0)
        c = rng.normal(size=100)
        value = rhat([c, c.copy()])
        assert value == pytest.approx(math.sqrt(99.0 / 100.0), abs=1e-15)
        assert value == pytest.approx(0.99498743710662, abs=1e-12)

    def test_offset_chains_flagged(self):
        rng = np.random.default_rng(1)
        a = rng.normal(0.0, 1.0, size=1000)
        b = rng.normal(100.0, 1.0, size=1000)
        assert rhat([a, b]) > 10.0

    def test_dual_implementation_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            m = int(rng.integers(2, 6))
            n = int(rng.integers(2, 200))
            loc = rng.normal(size=m)
            chains = [rng.normal(loc[j], rng.uniform(0.5, 2.0), n)
                      for j in range(m)]
            assert rhat(chains) == pytest.approx(
                rhat_reference(chains), abs=1e-12
            )

    def test_shift_and_scale_invariance(self):
        rng = np.random.default_rng(3)
        chains = [rng.normal(size=50) for _ in range(3)]
        base = rhat(chains)
        shifted = rhat([c + 17.3 for c in chains])
        scaled = rhat([2.5 * c for c in chains])
        assert shifted == pytest.approx(base, abs=1e-12)
        assert scaled == pytest.approx(base, abs=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError):
            rhat([np.zeros(10)])
        with pytest.raises(ValueError):
            rhat([np.zeros(10), np.zeros(5)])
        with pytest.raises(ValueError, match="undefined"):
            rhat([np.ones(10), np.ones(10)])


class FakeChain:
    def __init__(self, names, draws):
        self.names = list(names)
        self.draws = np.asarray(draws, float)

    def column(self, name):
        return self.draws[:, self.names.index(name)]


class TestSummarize:
    def test_median_of_small_set(self):
        chain = FakeChain(["q"], np.array([[1.0], [2.0], [3.0], [4.0], [5.0]]))
        row = summarize([chain], "q")
        assert row.median == 3.0
        assert row.prob_neg == 0.0

    def test_all_negative(self):
        chain = FakeChain(["q"], -np.abs(np.random.default_rng(4).normal(
            size=(50, 1))) - 0.1)
        assert summarize([chain], "q").prob_neg == 1.0

    def test_quantile_ordering_property(self):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            draws = rng.normal(rng.normal(), rng.uniform(0.1, 3.0), size=(50, 1))
            row = summarize([FakeChain(["q"], draws)], "q")
            assert row.q05 <= row.q25 <= row.median <= row.q75 <= row.q95

    def test_pools_across_chains(self):
        a = FakeChain(["q"], np.array([[1.0], [2.0]]))
        b = FakeChain(["q"], np.array([[3.0], [4.0]]))
        assert summarize([a, b], "q").median == 2.5

    def test_callable_quantity(self):
        chain = FakeChain(["a", "b"], np.array([[1.0, 2.0], [3.0, 4.0]]))
        row = summarize([chain], lambda d: d[:, 0] + d[:, 1], name="sum")
        assert row.median == 5.0
        assert row.name == "sum"

    def test_row_validation(self):
        with pytest.raises(ValueError):
            SummaryRow("x", median=0.0, q25=1.0, q75=2.0, q05=-1.0, q95=3.0)


def flux_names(plot_ids, T):
    names = []
    for pid in plot_ids:
        names += [f"init[{pid},{p}]" for p in POOL_NAMES]
        names += [f"pool[{pid},{T},{p}]" for p in POOL_NAMES[:5]]
    return names


def make_plot(pid, treatment, area, T):
    forcing = tuple(Forcing(p=0.1, m=0.0, rate_mod=1.0) for _ in range(T))
    return PlotData(pid, treatment, area, forcing, ())


class TestFlux:
    def test_static_state_gives_zero_flux(self):
        T = 12
        names = flux_names(["a"], T)
        row = np.array([1.0, 2.0, 0.5, 0.4, 30.0, 5.0,  # init
                        1.0, 2.0, 0.5, 0.4, 30.0])      # final non-inert
        chain = FakeChain(names, np.tile(row, (20, 1)))
        draws = flux_draws([chain], [make_plot("a", "CTL", 1.0, T)])
        np.testing.assert_array_equal(draws["CTL"], np.zeros(20))

    def test_engineered_net_loss(self):
        """12 Mg over 120 months annualizes to exactly 1.2."""
        T = 120
        names = flux_names(["a"], T)
        init = np.array([5.0, 10.0, 1.0, 1.0, 28.0, 5.0])  # total 50
        final5 = np.array([3.0, 8.0, 0.5, 0.5, 21.0])      # total 38 with i=5
        chain = FakeChain(names, np.tile(np.concatenate([init, final5]), (4, 1)))
        draws = flux_draws([chain], [make_plot("a", "CTL", 1.0, T)])
        np.testing.assert_array_equal(draws["CTL"], np.full(4, 1.2))

    def test_equal_area_aggregation_is_plain_mean(self):
        T = 10
        names = flux_names(["a", "b", "c"], T)
        rng = np.random.default_rng(6)
        draws_matrix = rng.uniform(1.0, 10.0, size=(30, len(names)))
        chain = FakeChain(names, draws_matrix)
        plots = [make_plot(pid, "CTL", 2.0, T) for pid in ("a", "b", "c")]
        pooled = flux_draws([chain], plots)["CTL"]
        per_plot = [
            flux_draws([chain], [p])[p.treatment] for p in plots
        ]
        np.testing.assert_allclose(
            pooled, np.mean(per_plot, axis=0), rtol=1e-12
        )

    def test_area_weighting(self):
        T = 10
        names = flux_names(["a", "b"], T)
        rng = np.random.default_rng(7)
        chain = FakeChain(names, rng.uniform(1.0, 10.0, size=(15, len(names))))
        plots = [make_plot("a", "CTL", 1.0, T), make_plot("b", "CTL", 3.0, T)]
        pooled = flux_draws([chain], plots)["CTL"]
        fa = flux_draws([chain], [plots[0]])["CTL"]
        fb = flux_draws([chain], [plots[1]])["CTL"]
        np.testing.assert_allclose(pooled, (1.0 * fa + 3.0 * fb) / 4.0,
                                   rtol=1e-12)

    def test_flux_posterior_rows(self):
        T = 12
        names = flux_names(["a"], T)
        rng = np.random.default_rng(8)
        chain = FakeChain(names, rng.uniform(1.0, 10.0, size=(40, len(names))))
        rows = flux_posterior([chain], [make_plot("a", "CTL", 1.0, T)])
        assert set(rows) == {"CTL"}
        assert rows["CTL"].name == "flux[CTL]"
        assert rows["CTL"].q05 <= rows["CTL"].median <= rows["CTL"].q95


class TestTrendSurface:
    @staticmethod
    def grid_samples(beta=(1.0, 0.2, -0.1, 0.05), noise=None, seed=0):
        rng = np.random.default_rng(seed)
        pts = []
        for x in range(4):
            for y in range(4):
                mu = beta[0] + beta[1] * x + beta[2] * y + beta[3] * x * y
                eps = rng.normal(0.0, noise) if noise else 0.0
                pts.append((float(x), float(y), math.exp(mu + eps)))
        return pts

    def test_exact_coefficient_recovery(self):
        res = trend_surface_diagnostic({"TOC": self.grid_samples()})
        np.testing.assert_allclose(
            res.coef["TOC"], [1.0, 0.2, -0.1, 0.05], atol=1e-8
        )

    def test_on_surface_residual_diffs_zero(self):
        res = trend_surface_diagnostic({"TOC": self.grid_samples()})
        assert all(abs(r[1]) < 1e-16 for r in res.rows)

    def test_pair_count(self):
        pts = self.grid_samples(noise=0.1)
        res = trend_surface_diagnostic({"TOC": pts})
        n = len(pts)
        assert len(res.rows) == n * (n - 1) // 2

    def test_sigma2_unbiased_form(self):
        pts = self.grid_samples(noise=0.3, seed=3)
        res = trend_surface_diagnostic({"TOC": pts})
        x = np.array([p[0] for p in pts])
        y = np.array([p[1] for p in pts])
        design = np.column_stack([np.ones_like(x), x, y, x * y])
        logv = np.log([p[2] for p in pts])
        resid = logv - design @ np.linalg.lstsq(design, logv, rcond=None)[0]
        expect = resid @ resid / (len(pts) - 4)
        assert res.sigma2["TOC"] == pytest.approx(expect, rel=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError, match="at least 5"):
            trend_surface_diagnostic({"TOC": self.grid_samples()[:4]})
        bad = self.grid_samples()
        bad[0] = (0.0, 0.0, -1.0)
        with pytest.raises(ValueError, match="positive"):
            trend_surface_diagnostic({"TOC": bad})
        collinear = [(1.0, float(y), 2.0 + y) for y in range(6)]
        with pytest.raises(ValueError, match="rank"):
            trend_surface_diagnostic({"TOC": collinear})
