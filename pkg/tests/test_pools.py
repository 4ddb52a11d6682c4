import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from soilcarbon.pools import (
    DecayRates,
    DegenerateStateError,
    Forcing,
    NoiseParams,
    PoolState,
    PrimaryRouting,
    build_propagator,
    decayed_masses,
    derive_routing,
    flux_plot,
    flux_treatment,
    observe_map,
    step_deterministic,
    step_stochastic,
)

# Frozen from a 30-digit evaluation of the routing algebra.
R_CO2_AT_CLAY_016 = 3.84924475991567766867558416549
NEXT_D_EXAMPLE = 5.52630995392324124800618745419

PRIMARY = PrimaryRouting(p_xf=0.46, p_hs=0.46, p_clay=0.16, r_dpm_rpm=1.44)
RATES = DecayRates(10.0, 0.07, 0.66, 0.66, 0.02, alpha={"PP": 1.0, "PF": 1.3})
NOISE = NoiseParams(sigma2_process=[0.01] * 5, sigma2_meas=[0.05, 0.04, 0.29])


def random_instance(rng):
    state = PoolState(*rng.uniform(0.01, 50.0, size=6))
    primary = PrimaryRouting(
        p_xf=rng.uniform(0.0, 1.0),
        p_hs=rng.uniform(0.0, 1.0),
        p_clay=rng.uniform(0.0, 1.0),
        r_dpm_rpm=rng.uniform(0.0, 3.0),
        pi_m=rng.uniform(0.0, 1.0, size=5),
    )
    rates = DecayRates(
        *rng.uniform(0.01, 12.0, size=5), alpha={"t": rng.uniform(0.2, 3.0)}
    )
    forcing = Forcing(
        p=rng.uniform(0.0, 2.0),
        m=rng.uniform(0.0, 2.0),
        rate_mod=rng.uniform(0.0, 2.0),
        dt=rng.uniform(0.25, 2.0),
    )
    return state, primary, rates, forcing


class TestDeriveRouting:
    def test_r_co2_at_site_clay(self):
        d = derive_routing(PRIMARY)
        assert d.r_co2_solid == pytest.approx(R_CO2_AT_CLAY_016, abs=1e-12)

    def test_plant_split(self):
        d = derive_routing(PRIMARY)
        assert d.p_pd == pytest.approx(1.44 / 2.44, rel=1e-15)
        zero = derive_routing(
            PrimaryRouting(p_xf=0.46, p_hs=0.46, p_clay=0.16, r_dpm_rpm=0.0)
        )
        assert zero.p_pd == 0.0

    def test_retained_decay_split(self):
        d = derive_routing(PRIMARY)
        retained = 1.0 / (1.0 + R_CO2_AT_CLAY_016)
        assert d.p_uf == pytest.approx(0.46 * retained, abs=1e-12)
        assert d.p_uh == pytest.approx(0.54 * retained, abs=1e-12)
        assert d.p_uf + d.p_uh == pytest.approx(retained, abs=1e-12)
        assert d.p_us == 0.0 and d.p_vf == 0.0

    def test_manure_normalization(self):
        d = derive_routing(PRIMARY)
        assert sum(d.p_m) == pytest.approx(1.0, abs=1e-12)
        with pytest.raises(ValueError, match="pi_m"):
            derive_routing(
                PrimaryRouting(0.46, 0.46, 0.16, 1.44, pi_m=(0, 0, 0, 0, 0))
            )

    def test_routing_closure(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            _, primary, _, _ = random_instance(rng)
            d = derive_routing(primary)
            co2_share = d.r_co2_solid / (1.0 + d.r_co2_solid)
            assert d.p_uf + d.p_us + d.p_uh + co2_share == pytest.approx(1, abs=1e-12)
            assert d.p_vf + d.p_vs + d.p_vh + co2_share == pytest.approx(1, abs=1e-12)


class TestDecayedMasses:
    def test_zero_state(self):
        state = PoolState(0, 0, 0, 0, 0, 0)
        assert decayed_masses(state, RATES, "PP", Forcing(0, 0, 1.0)) == (0.0, 0.0)

    def test_zero_rate_modifier(self):
        state = PoolState(1, 2, 3, 4, 5, 6)
        assert decayed_masses(state, RATES, "PP", Forcing(0, 0, 0.0)) == (0.0, 0.0)

    def test_scalar_case(self):
        state = PoolState(10, 0, 0, 0, 0, 0)
        u, v = decayed_masses(state, RATES, "PP", Forcing(0, 0, 1.0))
        assert u == pytest.approx(10.0 * (1.0 - math.exp(-10.0 / 12.0)), rel=1e-14)
        assert v == 0.0

    def test_bounded_by_stocks(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            state, primary, rates, forcing = random_instance(rng)
            u, v = decayed_masses(state, rates, "t", forcing)
            assert 0.0 <= u <= state.d + state.r + state.f + state.s + 1e-12
            assert 0.0 <= v <= state.h + 1e-12


class TestStepDeterministic:
    def test_identity_when_rates_nullified(self):
        routing = derive_routing(PRIMARY)
        state = PoolState(1, 2, 3, 4, 5, 6)
        nxt, co2 = step_deterministic(state, RATES, routing, "PP", Forcing(0, 0, 0.0))
        assert nxt == state
        assert co2 == 0.0

    def test_inert_pool_unchanged(self):
        routing = derive_routing(PRIMARY)
        state = PoolState(1, 2, 3, 4, 5, 6)
        nxt, _ = step_deterministic(state, RATES, routing, "PF", Forcing(3, 1, 1.5))
        assert nxt.i == 6.0

    def test_d_pool_line(self):
        routing = derive_routing(PRIMARY)
        state = PoolState(10, 0, 0, 0, 0, 0)
        nxt, _ = step_deterministic(state, RATES, routing, "PP", Forcing(2, 0, 1.0))
        assert nxt.d == pytest.approx(NEXT_D_EXAMPLE, rel=1e-13)

    def test_mass_balance(self):
        rng = np.random.default_rng(11)
        for _ in range(500):
            state, primary, rates, forcing = random_instance(rng)
            routing = derive_routing(primary)
            nxt, co2 = step_deterministic(state, rates, routing, "t", forcing)
            lhs = nxt.total() + co2
            rhs = state.total() + forcing.p + forcing.m
            assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_monotone_decay_without_inputs(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            state, primary, rates, _ = random_instance(rng)
            routing = derive_routing(primary)
            forcing = Forcing(0.0, 0.0, rng.uniform(0.0, 2.0))
            nxt, _ = step_deterministic(state, rates, routing, "t", forcing)
            assert nxt.total() - nxt.i <= state.total() - state.i + 1e-12

    def test_inert_bit_identical_over_many_steps(self):
        routing = derive_routing(PRIMARY)
        state = PoolState(1, 2, 3, 4, 5, 6.0000001)
        for _ in range(50):
            state, _ = step_deterministic(state, RATES, routing, "PP", Forcing(1, 0, 1))
        assert state.i == 6.0000001


class TestPropagator:
    def test_bottom_row(self):
        routing = derive_routing(PRIMARY)
        M, g = build_propagator(RATES, routing, "PP", Forcing(0, 0, 1.0))
        assert np.array_equal(M[5], [0, 0, 0, 0, 0, 1])
        np.testing.assert_array_equal(g, np.zeros(6))

    def test_matches_recursion(self):
        rng = np.random.default_rng(17)
        for _ in range(200):
            state, primary, rates, forcing = random_instance(rng)
            routing = derive_routing(primary)
            M, g = build_propagator(rates, routing, "t", forcing)
            nxt, _ = step_deterministic(state, rates, routing, "t", forcing)
            np.testing.assert_allclose(
                M @ state.as_array() + g, nxt.as_array(), rtol=1e-12, atol=1e-12
            )


class TestStepStochastic:
    def setup_method(self):
        self.routing = derive_routing(PRIMARY)

    def test_vanishing_noise_limit(self):
        tiny = NoiseParams([1e-16] * 5, [0.1] * 3)
        state = PoolState(1, 2, 3, 4, 5, 6)
        forcing = Forcing(1, 0.5, 1.0)
        det, _ = step_deterministic(state, RATES, self.routing, "PP", forcing)
        rng = np.random.default_rng(0)
        sto = step_stochastic(
            state, RATES, self.routing, tiny, "PP", forcing, rng.normal(size=5)
        )
        np.testing.assert_allclose(sto.as_array(), det.as_array(), rtol=1e-6)

    def test_exponent_cancellation(self):
        state = PoolState(1, 2, 3, 4, 5, 6)
        forcing = Forcing(1, 0, 1.0)
        det, _ = step_deterministic(state, RATES, self.routing, "PP", forcing)
        eta = 0.5 * np.sqrt(NOISE.sigma2_process)
        sto = step_stochastic(state, RATES, self.routing, NOISE, "PP", forcing, eta)
        np.testing.assert_allclose(sto.as_array(), det.as_array(), rtol=1e-14)

    def test_mean_preservation_smoke(self):
        state = PoolState(1, 2, 3, 4, 5, 6)
        forcing = Forcing(1, 0, 1.0)
        det, _ = step_deterministic(state, RATES, self.routing, "PP", forcing)
        rng = np.random.default_rng(5)
        n = 20000
        draws = np.empty((n, 6))
        for k in range(n):
            draws[k] = step_stochastic(
                state, RATES, self.routing, NOISE, "PP", forcing, rng.normal(size=5)
            ).as_array()
        se = draws.std(axis=0, ddof=1) / math.sqrt(n)
        err = np.abs(draws.mean(axis=0) - det.as_array())
        assert np.all(err[:5] <= 4.0 * se[:5])
        assert np.all(draws[:, 5] == 6.0)

    def test_degenerate_zero_mean(self):
        state = PoolState(0, 0, 0, 0, 0, 6)
        with pytest.raises(DegenerateStateError):
            step_stochastic(
                state, RATES, self.routing, NOISE, "PP", Forcing(0, 0, 1.0),
                np.zeros(5),
            )

    def test_positive_outputs(self):
        rng = np.random.default_rng(23)
        state = PoolState(1, 2, 3, 4, 5, 6)
        for _ in range(100):
            out = step_stochastic(
                state, RATES, self.routing, NOISE, "PP", Forcing(1, 0, 1.0),
                rng.normal(size=5),
            )
            assert np.all(out.as_array() > 0.0)


class TestObserveMap:
    def test_direct_sums(self):
        assert observe_map(PoolState(1, 2, 3, 4, 5, 6)) == (21.0, 6.0, 6.0)

    def test_zero_state(self):
        assert observe_map(PoolState(0, 0, 0, 0, 0, 0)) == (0.0, 0.0, 0.0)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(0.0, 1e6), min_size=6, max_size=6))
    def test_fraction_bounds(self, pools):
        toc, poc, roc = observe_map(PoolState(*pools))
        assert poc <= toc + 1e-9
        assert roc <= toc + 1e-9


class TestFlux:
    def test_no_change(self):
        s = PoolState(1, 2, 3, 4, 5, 6)
        assert flux_plot(s, s, 120) == 0.0

    def test_net_loss(self):
        initial = PoolState(10, 10, 10, 10, 10, 10)
        final = PoolState(8, 8, 8, 8, 8, 8)
        assert flux_plot(initial, final, 120) == pytest.approx(1.2, rel=1e-14)
        assert flux_plot(final, initial, 120) == pytest.approx(-1.2, rel=1e-14)

    def test_zero_months_rejected(self):
        s = PoolState(1, 2, 3, 4, 5, 6)
        with pytest.raises(ValueError):
            flux_plot(s, s, 0)

    def test_treatment_average(self):
        assert flux_treatment([(1, 2.0), (2, 2.0), (3, 2.0)]) == pytest.approx(2.0)
        assert flux_treatment([(5.5, 3.0)]) == 5.5
        assert flux_treatment([(0.0, 1.0), (4.0, 3.0)]) == pytest.approx(3.0)

    def test_treatment_rejects_bad_input(self):
        with pytest.raises(ValueError):
            flux_treatment([])
        with pytest.raises(ValueError):
            flux_treatment([(1.0, 0.0)])


class TestValidation:
    def test_negative_pool_rejected(self):
        with pytest.raises(ValueError):
            PoolState(-1, 0, 0, 0, 0, 0)

    def test_nonfinite_pool_rejected(self):
        with pytest.raises(ValueError):
            PoolState(math.nan, 0, 0, 0, 0, 0)

    def test_bad_routing_rejected(self):
        with pytest.raises(ValueError):
            PrimaryRouting(p_xf=1.2, p_hs=0.4, p_clay=0.1, r_dpm_rpm=1.0)

    def test_bad_rate_rejected(self):
        with pytest.raises(ValueError):
            DecayRates(0.0, 0.07, 0.66, 0.66, 0.02)
        with pytest.raises(ValueError):
            DecayRates(10.0, 0.07, 0.66, 0.66, 0.02, alpha={"x": -1.0})

    def test_unknown_treatment(self):
        with pytest.raises(KeyError):
            RATES.effective("nope")

    def test_bad_forcing(self):
        with pytest.raises(ValueError):
            Forcing(p=-0.1, m=0.0, rate_mod=1.0)
        with pytest.raises(ValueError):
            Forcing(p=0.0, m=0.0, rate_mod=1.0, dt=0.0)

    def test_bad_noise(self):
        with pytest.raises(ValueError):
            NoiseParams([0.01] * 4, [0.1] * 3)
        with pytest.raises(ValueError):
            NoiseParams([0.0] * 5, [0.1] * 3)
