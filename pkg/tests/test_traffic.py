"""Channel, rate-table and traffic-config unit tests.

Expected values marked "oracle:" are frozen from independent direct
evaluations (math.exp sums, hand arithmetic), not from the implementation.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tddq import (
    ChannelModel,
    RateAdaptationTable,
    SaturationError,
    TrafficConfig,
    default_scenario,
    long_service_moments,
    parse_scenario,
    region_probabilities,
    sample_long_service,
    sample_long_services,
    short_service_moments,
    solve_arrival_rates,
    utilization,
)

# oracle: p_i = exp(-G_{i-1}/gbar) - exp(-G_i/gbar) at gbar = 10^0.5,
# thresholds 1 and 10 (0 dB, 10 dB)
GBAR_5DB = 10.0**0.5
P_FIG3 = (
    1.0 - math.exp(-1.0 / GBAR_5DB),                       # 0.2711065858899754
    math.exp(-1.0 / GBAR_5DB) - math.exp(-10.0 / GBAR_5DB),  # 0.6865641944868196
    math.exp(-10.0 / GBAR_5DB),                            # 0.04232921962320501
)
# oracle: direct summation with durations (15, 10, 2), worst channel first
E_SL_FIG3 = 15.0 * P_FIG3[0] + 10.0 * P_FIG3[1] + 2.0 * P_FIG3[2]     # 11.016899172464237
E_SL2_FIG3 = 225.0 * P_FIG3[0] + 100.0 * P_FIG3[1] + 4.0 * P_FIG3[2]  # 129.82471815241925


def fig3_channel() -> ChannelModel:
    return ChannelModel.from_db(5.0)


def fig3_table() -> RateAdaptationTable:
    return RateAdaptationTable.from_tti_durations((0.0, 10.0), (15.0, 10.0, 2.0))


def random_table(rng: np.random.Generator) -> tuple[ChannelModel, RateAdaptationTable]:
    m = int(rng.integers(1, 7))
    inner = np.sort(rng.uniform(0.1, 50.0, size=m - 1))
    rates = np.sort(rng.uniform(0.05, 5.0, size=m))
    table = RateAdaptationTable(
        thresholds=(0.0, *map(float, inner), math.inf),
        rates=tuple(map(float, rates)),
    )
    return ChannelModel(float(rng.uniform(0.05, 50.0))), table


class TestChannelModel:
    def test_db_conversion(self):
        assert ChannelModel.from_db(0.0).mean_snr == pytest.approx(1.0)
        assert ChannelModel.from_db(5.0).mean_snr == pytest.approx(GBAR_5DB)
        assert ChannelModel.from_db(-10.0).mean_snr == pytest.approx(0.1)

    @pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
    def test_rejects_nonpositive(self, bad):
        with pytest.raises(ValueError):
            ChannelModel(bad)


class TestRateAdaptationTable:
    def test_fig3_construction(self):
        table = fig3_table()
        assert table.n_regions == 3
        assert table.thresholds[0] == 0.0
        assert math.isinf(table.thresholds[-1])
        assert table.thresholds[1] == pytest.approx(1.0)
        assert table.thresholds[2] == pytest.approx(10.0)
        assert table.durations == pytest.approx((15.0, 10.0, 2.0))

    def test_rejects_bad_thresholds(self):
        with pytest.raises(ValueError):
            RateAdaptationTable(thresholds=(1.0, math.inf), rates=(1.0,))
        with pytest.raises(ValueError):
            RateAdaptationTable(thresholds=(0.0, 5.0), rates=(1.0,))
        with pytest.raises(ValueError):
            RateAdaptationTable(thresholds=(0.0, 5.0, 4.0, math.inf), rates=(1.0, 2.0, 3.0))
        with pytest.raises(ValueError):
            RateAdaptationTable(thresholds=(0.0, math.inf), rates=(1.0, 2.0))

    def test_rejects_nonmonotone_rates(self):
        # a better channel must not transmit slower: durations (2, 10, 15)
        # over increasing SNR regions are rejected
        with pytest.raises(ValueError):
            RateAdaptationTable.from_tti_durations((0.0, 10.0), (2.0, 10.0, 15.0))

    def test_rejects_nonpositive_rates(self):
        with pytest.raises(ValueError):
            RateAdaptationTable(thresholds=(0.0, math.inf), rates=(0.0,))


class TestRegionProbabilities:
    def test_single_region_is_certain(self):
        table = RateAdaptationTable(thresholds=(0.0, math.inf), rates=(0.1,))
        for snr in (0.01, 1.0, 100.0):
            p = region_probabilities(ChannelModel(snr), table)
            assert p.tolist() == [1.0]

    def test_fig3_values(self):
        p = region_probabilities(fig3_channel(), fig3_table())
        assert p == pytest.approx(P_FIG3, abs=1e-15)
        # frozen literals from the oracle evaluation
        assert p[0] == pytest.approx(0.2711065858899754, abs=1e-12)
        assert p[1] == pytest.approx(0.6865641944868196, abs=1e-12)
        assert p[2] == pytest.approx(0.04232921962320501, abs=1e-12)
        assert abs(p.sum() - 1.0) <= 1e-12

    def test_strong_channel_limit(self):
        # mean SNR far above every threshold: top region takes it all
        p = region_probabilities(ChannelModel(1e9), fig3_table())
        assert p[-1] > 0.99999
        assert p[0] < 1e-8

    def test_sum_randomized_tables(self):
        rng = np.random.default_rng(20260808)
        worst = 0.0
        for _ in range(300):
            channel, table = random_table(rng)
            worst = max(worst, abs(float(region_probabilities(channel, table).sum()) - 1.0))
        assert worst <= 1e-12

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_sum_and_nonnegativity_property(self, seed):
        channel, table = random_table(np.random.default_rng(seed))
        p = region_probabilities(channel, table)
        assert abs(float(p.sum()) - 1.0) <= 1e-12
        assert np.all(p >= 0.0)

    @given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.95))
    @settings(max_examples=60, deadline=None)
    def test_refinement_consistency(self, seed, frac):
        """Splitting a region (same rate both halves) must not move mass."""
        channel, table = random_table(np.random.default_rng(seed))
        p = region_probabilities(channel, table)
        i = seed % table.n_regions
        lo, hi = table.thresholds[i], table.thresholds[i + 1]
        split = lo + frac * ((hi - lo) if math.isfinite(hi) else max(lo, 1.0) * 3.0)
        thresholds = (*table.thresholds[: i + 1], split, *table.thresholds[i + 1 :])
        rates = (*table.rates[: i + 1], table.rates[i], *table.rates[i + 1 :])
        refined = region_probabilities(channel, RateAdaptationTable(thresholds, rates))
        assert refined[i] + refined[i + 1] == pytest.approx(p[i], abs=1e-12)
        merged = np.concatenate([refined[:i], [refined[i] + refined[i + 1]], refined[i + 2 :]])
        assert merged == pytest.approx(p, abs=1e-12)


class TestServiceMoments:
    def test_single_rate_deterministic(self):
        table = RateAdaptationTable(thresholds=(0.0, math.inf), rates=(0.1,))
        assert long_service_moments(ChannelModel(3.0), table) == pytest.approx((10.0, 100.0))

    def test_fig3_moments(self):
        first, second = long_service_moments(fig3_channel(), fig3_table())
        assert first == pytest.approx(E_SL_FIG3, rel=1e-12)
        assert second == pytest.approx(E_SL2_FIG3, rel=1e-12)
        assert second >= first**2

    def test_near_degenerate_region(self):
        # vanishing mean SNR concentrates all mass on the worst region
        first, second = long_service_moments(ChannelModel(1e-6), fig3_table())
        assert first == pytest.approx(15.0, rel=1e-4)
        assert second == pytest.approx(225.0, rel=1e-4)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_variance_nonnegative(self, seed):
        channel, table = random_table(np.random.default_rng(seed))
        first, second = long_service_moments(channel, table)
        assert second - first**2 >= -1e-12

    def test_short_moments(self):
        def config(mu):
            table = RateAdaptationTable(thresholds=(0.0, math.inf), rates=(mu,))
            return TrafficConfig(0.0, 0.0, mu, ChannelModel(1.0), table)

        assert short_service_moments(config(1.0)) == pytest.approx((1.0, 1.0))
        assert short_service_moments(config(2.0)) == pytest.approx((0.5, 0.25))
        assert short_service_moments(config(0.1)) == pytest.approx((10.0, 100.0))


class TestUtilization:
    def test_empty_system(self):
        table = RateAdaptationTable(thresholds=(0.0, math.inf), rates=(1.0,))
        config = TrafficConfig(0.0, 0.0, 1.0, ChannelModel(1.0), table)
        assert utilization(config) == (0.0, 0.0, 0.0)

    def test_hand_arithmetic(self):
        # E[S_L] = 2, so rho = 0.1*1 + 0.4*2 = 0.9
        table = RateAdaptationTable(thresholds=(0.0, math.inf), rates=(0.5,))
        config = TrafficConfig(0.1, 0.4, 1.0, ChannelModel(1.0), table)
        rho, rho_s, rho_l = utilization(config)
        assert rho == pytest.approx(0.9, abs=1e-12)
        assert rho_s == pytest.approx(0.1, abs=1e-12)
        assert rho_l == pytest.approx(0.8, abs=1e-12)

    def test_saturation_rejected_at_construction(self):
        table = RateAdaptationTable(thresholds=(0.0, math.inf), rates=(0.5,))
        with pytest.raises(SaturationError):
            TrafficConfig(0.3, 0.4, 1.0, ChannelModel(1.0), table)

    def test_slot_alignment_enforced(self):
        # 2.5 time units is not a whole number of unit slots
        table = RateAdaptationTable(thresholds=(0.0, math.inf), rates=(0.4,))
        with pytest.raises(ValueError):
            TrafficConfig(0.0, 0.1, 1.0, ChannelModel(1.0), table)
        # but it is five half-slots
        TrafficConfig(0.0, 0.1, 2.0, ChannelModel(1.0), table)

    def test_rejects_negative_rates(self):
        table = RateAdaptationTable(thresholds=(0.0, math.inf), rates=(1.0,))
        with pytest.raises(ValueError):
            TrafficConfig(-0.1, 0.0, 1.0, ChannelModel(1.0), table)
        with pytest.raises(ValueError):
            TrafficConfig(0.1, 0.0, 0.0, ChannelModel(1.0), table)


class TestSolveArrivalRates:
    def test_short_only(self):
        lam_s, lam_l = solve_arrival_rates(0.5, 0.0, fig3_channel(), fig3_table(), 1.0)
        assert lam_s == pytest.approx(0.5, abs=1e-12)
        assert lam_l == 0.0

    def test_fig3_target(self):
        # oracle: lam_S = rho / (4 E[S_L] + 1)
        lam_s, lam_l = solve_arrival_rates(0.9, 4.0, fig3_channel(), fig3_table(), 1.0)
        assert lam_s == pytest.approx(0.9 / (4.0 * E_SL_FIG3 + 1.0), rel=1e-12)
        assert lam_s == pytest.approx(0.019970002088053582, rel=1e-12)
        assert lam_l == pytest.approx(4.0 * lam_s, rel=1e-12)

    def test_plug_back(self):
        config = default_scenario().config_for(0.9)
        rho, _, _ = utilization(config)
        assert rho == pytest.approx(0.9, abs=1e-12)

    @given(st.floats(0.01, 0.99), st.floats(0.0, 50.0))
    @settings(max_examples=80, deadline=None)
    def test_plug_back_property(self, target, ratio):
        channel, table = fig3_channel(), fig3_table()
        lam_s, lam_l = solve_arrival_rates(target, ratio, channel, table, 1.0)
        e_l, _ = long_service_moments(channel, table)
        assert lam_l * e_l + lam_s * 1.0 == pytest.approx(target, abs=1e-12)

    def test_boundaries(self):
        args = (fig3_channel(), fig3_table(), 1.0)
        solve_arrival_rates(0.99999, 4.0, *args)  # stable, accepted
        with pytest.raises(SaturationError):
            solve_arrival_rates(1.0, 4.0, *args)
        with pytest.raises(SaturationError):
            solve_arrival_rates(0.0, 4.0, *args)
        with pytest.raises(ValueError):
            solve_arrival_rates(0.5, -1.0, *args)


class TestSampleLongService:
    def test_single_region_constant(self):
        table = RateAdaptationTable(thresholds=(0.0, math.inf), rates=(0.5,))
        rng = np.random.default_rng(1)
        assert all(
            sample_long_service(ChannelModel(1.0), table, rng) == 2.0 for _ in range(100)
        )

    def test_same_seed_same_sequence(self):
        channel, table = fig3_channel(), fig3_table()
        rng1, rng2 = np.random.default_rng(7), np.random.default_rng(7)
        seq1 = [sample_long_service(channel, table, rng1) for _ in range(200)]
        seq2 = [sample_long_service(channel, table, rng2) for _ in range(200)]
        assert seq1 == seq2

    def test_vectorized_matches_scalar_stream(self):
        channel, table = fig3_channel(), fig3_table()
        rng1, rng2 = np.random.default_rng(11), np.random.default_rng(11)
        vec = sample_long_services(channel, table, rng1, 50)
        scalars = [sample_long_service(channel, table, rng2) for _ in range(50)]
        assert vec.tolist() == scalars

    def test_empirical_frequencies_match_probabilities(self):
        channel, table = fig3_channel(), fig3_table()
        draws = sample_long_services(channel, table, np.random.default_rng(2026), 1_000_000)
        for duration, p in zip((15.0, 10.0, 2.0), P_FIG3):
            freq = float(np.mean(draws == duration))
            assert abs(freq - p) < 0.005

    def test_monte_carlo_mean_converges(self):
        channel, table = fig3_channel(), fig3_table()
        n = 1_000_000
        draws = sample_long_services(channel, table, np.random.default_rng(55), n)
        std = math.sqrt(E_SL2_FIG3 - E_SL_FIG3**2)
        assert abs(float(draws.mean()) - E_SL_FIG3) <= 5.0 * std / math.sqrt(n)


class TestScenarioParsing:
    def test_defaults_match_headline_setting(self):
        s = default_scenario()
        assert s.channel.mean_snr == pytest.approx(GBAR_5DB)
        assert s.table.durations == pytest.approx((15.0, 10.0, 2.0))
        assert s.mu_short == 1.0
        assert s.lambda_ratio == 4.0
        assert s.rho_list == pytest.approx(tuple(np.arange(1, 10) / 10))

    def test_parse_with_comments_and_spacing(self):
        s = parse_scenario(
            """
            # comment line
            mean_snr_db = 10   # trailing comment
            thresholds_db = 3
            long_ttis = 4, 2
            mu_short = 2
            lambda_ratio = 1.5
            rho = 0.25, 0.5
            """
        )
        assert s.channel.mean_snr == pytest.approx(10.0)
        assert s.table.durations == pytest.approx((4.0, 2.0))
        assert s.mu_short == 2.0
        assert s.lambda_ratio == 1.5
        assert s.rho_list == (0.25, 0.5)

    def test_repo_experiment_file_parses(self):
        from tddq import load_scenario

        s = load_scenario("experiments/fig3.cfg")
        assert s == default_scenario()

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown key"):
            parse_scenario("bogus = 1\n")

    def test_bad_number_rejected(self):
        with pytest.raises(ValueError):
            parse_scenario("mu_short = fast\n")

    def test_missing_equals_rejected(self):
        with pytest.raises(ValueError, match="key = value"):
            parse_scenario("mu_short 1\n")

    def test_region_count_mismatch_rejected(self):
        with pytest.raises(ValueError):
            parse_scenario("thresholds_db = 0, 10\nlong_ttis = 10, 2\n")

    def test_rho_range_enforced_unless_relaxed(self):
        with pytest.raises(ValueError):
            parse_scenario("rho = 0.5, 1.2\n")
        s = parse_scenario("rho = 0.5, 1.2\n", strict_rho=False)
        assert s.rho_list == (0.5, 1.2)

    def test_config_for_builds_stable_point(self):
        config = default_scenario().config_for(0.5)
        rho, _, _ = utilization(config)
        assert rho == pytest.approx(0.5, abs=1e-12)
