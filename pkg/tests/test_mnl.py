"""Reference-price MNL: utilities, probabilities, likelihood, gradient, MLE."""

import numpy as np
import pytest

from schedprice.calendar import DayOfWeek, LeadTimeCalendar, reference_prices
from schedprice.mnl import (
    BucketMap,
    ChoiceData,
    ChoiceObservation,
    MnlParams,
    UnidentifiableFitError,
    choice_probabilities,
    default_bucket_map,
    fit_mle,
    negative_log_likelihood,
    nll_gradient,
    single_bucket_map,
    standard_errors,
    utilities,
)
from schedprice.simulate import ExplorationPricing, generate_quotes, make_preset

from oracles import (
    finite_difference_gradient,
    mnl_probs_oracle,
    reference_prices_oracle,
    utilities_oracle,
)

TOY_PRICES = np.array([10.0, 11.0, 9.0, 12.0, 12.0, 10.0, 8.0])
TOY_REF = np.array([8.0, 9.0, 9.0, 9.0, 10.0, 10.0, 8.0])
# Probability of option 3 in the worked example, frozen from the oracle:
# reference_prices_oracle + utilities_oracle + mnl_probs_oracle.
TOY_P3 = 0.11994566050857669


def random_choice_data(rng, n, L=14, bucket_map=None):
    prices = rng.uniform(5.0, 25.0, size=(n, L))
    cal = LeadTimeCalendar(L, DayOfWeek.MONDAY)
    ref = np.array([reference_prices(p, cal) for p in prices])
    offered = np.ones((n, L), dtype=bool)
    chosen = rng.integers(0, L + 1, size=n)
    return ChoiceData(prices, ref, offered, chosen)


def random_params(rng, bucket_map):
    B = bucket_map.num_buckets
    return MnlParams(
        alpha=tuple(rng.normal(0, 0.05, size=3)),
        beta=tuple(rng.uniform(0.02, 0.2, size=B)),
        gamma=tuple(rng.uniform(0.0, 0.1, size=B)),
        bucket_map=bucket_map,
    )


class TestBucketMap:
    def test_two_week_monday_start_default(self):
        # 3 + 3 + 4 weekdays plus one weekend bucket.
        cal = LeadTimeCalendar(14, DayOfWeek.MONDAY)
        bm = default_bucket_map(cal)
        assert bm.bucket_of == (0, 0, 0, 1, 1, 3, 3, 1, 2, 2, 2, 2, 3, 3)
        assert bm.num_buckets == 4

    def test_empty_groups_are_compacted(self):
        cal = LeadTimeCalendar(7, DayOfWeek.SUNDAY)
        bm = default_bucket_map(cal)
        assert bm.num_buckets == 3   # only 5 weekdays: 3 + 2, no third group

    def test_contiguity_enforced(self):
        with pytest.raises(ValueError):
            BucketMap((0, 2))


class TestUtilities:
    def test_toy_first_option(self, toy_params):
        u = utilities(toy_params, TOY_PRICES, TOY_REF)
        assert u[0] == pytest.approx(-1.1, abs=1e-12)

    def test_zero_params_zero_utilities(self):
        params = MnlParams((0, 0, 0), (1e-4,), (0.0,), single_bucket_map(7))
        u = utilities(params, np.zeros(7), np.zeros(7))
        np.testing.assert_allclose(u, 0.0, atol=1e-15)

    def test_matches_term_by_term_oracle(self):
        rng = np.random.default_rng(0)
        cal = LeadTimeCalendar(7, DayOfWeek.SUNDAY)
        bm = default_bucket_map(cal)
        for _ in range(25):
            params = random_params(rng, bm)
            prices = rng.uniform(5, 20, size=7)
            ref = reference_prices(prices, cal)
            expected = utilities_oracle(
                params.alpha,
                params.beta_per_option(),
                params.gamma_per_option(),
                prices,
                ref,
            )
            np.testing.assert_allclose(utilities(params, prices, ref), expected)

    def test_length_mismatch(self, toy_params):
        with pytest.raises(ValueError):
            utilities(toy_params, np.ones(6), np.ones(6))


class TestChoiceProbabilities:
    def test_paper_worked_example(self, toy_params, toy_calendar):
        ref = reference_prices(TOY_PRICES, toy_calendar)
        probs = choice_probabilities(toy_params, TOY_PRICES, ref)
        np.testing.assert_array_equal(
            np.round(probs, 3),
            [0.295, 0.098, 0.089, 0.120, 0.076, 0.080, 0.109, 0.133],
        )
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_uniform_when_utilities_zero(self):
        params = MnlParams((0, 0, 0), (1e-4,), (0.0,), single_bucket_map(5))
        probs = choice_probabilities(params, np.zeros(5), np.zeros(5))
        np.testing.assert_allclose(probs, np.full(6, 1 / 6), atol=1e-7)

    def test_matches_plain_mnl_oracle_when_gamma_zero(self):
        rng = np.random.default_rng(1)
        bm = single_bucket_map(7)
        for _ in range(25):
            params = MnlParams(
                alpha=tuple(rng.normal(0, 0.05, size=3)),
                beta=(float(rng.uniform(0.02, 0.2)),),
                gamma=(0.0,),
                bucket_map=bm,
            )
            prices = rng.uniform(5, 20, size=7)
            utils = utilities_oracle(
                params.alpha, params.beta_per_option(), np.zeros(7), prices, prices
            )
            expected = mnl_probs_oracle(utils)
            got = choice_probabilities(params, prices, prices)
            np.testing.assert_allclose(got, expected, rtol=1e-12)

    def test_unavailable_options_get_zero_probability(self, toy_params):
        offered = np.array([True, False, True, True, False, True, True])
        probs = choice_probabilities(toy_params, TOY_PRICES, TOY_REF, offered)
        assert probs[2] == 0.0 and probs[5] == 0.0
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_distribution_property(self):
        rng = np.random.default_rng(2)
        cal = LeadTimeCalendar(14, DayOfWeek.FRIDAY)
        bm = default_bucket_map(cal)
        for _ in range(200):
            params = random_params(rng, bm)
            prices = rng.uniform(1, 40, size=14)
            ref = reference_prices(prices, cal)
            probs = choice_probabilities(params, prices, ref)
            assert np.all(probs >= 0)
            assert probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_translation_invariance_via_max_shift(self, toy_params):
        # Huge common utility offsets must not overflow thanks to the shift.
        params = MnlParams((400.0, 0, 0), (1e-4,), (0.0,), single_bucket_map(3))
        probs = choice_probabilities(params, np.zeros(3), np.zeros(3))
        assert np.all(np.isfinite(probs))
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_reference_price_dominance_toy(self, toy_params, toy_calendar):
        # Options 4 and 5 share price and bucket; 5 has the higher reference
        # price, hence the higher probability.
        ref = reference_prices(TOY_PRICES, toy_calendar)
        probs = choice_probabilities(toy_params, TOY_PRICES, ref)
        assert TOY_PRICES[3] == TOY_PRICES[4] and ref[4] > ref[3]
        assert probs[5] > probs[4]

    def test_local_substitution_boost(self, toy_params, toy_calendar):
        # Option 3 (Tuesday, price 9) is the unique window minimum for its
        # neighbor option 4; raising p3 boosts P(option 4).
        ref = reference_prices(TOY_PRICES, toy_calendar)
        base = choice_probabilities(toy_params, TOY_PRICES, ref)
        bumped_prices = TOY_PRICES.copy()
        bumped_prices[2] += 1.0
        bumped_ref = reference_prices(bumped_prices, toy_calendar)
        bumped = choice_probabilities(toy_params, bumped_prices, bumped_ref)
        assert bumped[4] > base[4]

    def test_non_finite_utility_rejected(self, toy_params):
        bad = TOY_PRICES.copy()
        bad[0] = np.inf
        with pytest.raises(ValueError):
            choice_probabilities(toy_params, bad, TOY_REF)


class TestOwnPriceMonotonicity:
    # Own-price strict decrease holds for every draw: e^{u_i} strictly
    # falls while every other exponential rises or stays (references are
    # non-decreasing in p_i).  The cross-option direction is exercised in
    # the acceptance suite, where its edge cases are documented.
    def test_own_probability_strictly_decreasing(self, toy_calendar):
        rng = np.random.default_rng(3)
        bm = default_bucket_map(toy_calendar)
        for _ in range(200):
            params = random_params(rng, bm)
            prices = rng.uniform(5, 20, size=7)
            k = int(rng.integers(7))
            up = prices.copy()
            up[k] += rng.uniform(0.5, 4.0)
            p_base = choice_probabilities(
                params, prices, reference_prices(prices, toy_calendar)
            )
            p_up = choice_probabilities(params, up, reference_prices(up, toy_calendar))
            assert p_up[k + 1] < p_base[k + 1]

    def test_reference_boosted_neighbor_gains_in_toy_example(
        self, toy_params, toy_calendar
    ):
        # When the bumped option is the unique window minimum of exactly one
        # neighbor, that neighbor's probability strictly rises.
        prices = np.array([10.0, 11.0, 9.0, 12.0, 12.0, 10.0, 8.0])
        base = choice_probabilities(
            toy_params, prices, reference_prices(prices, toy_calendar)
        )
        up = prices.copy()
        up[2] += 1.0
        bumped = choice_probabilities(toy_params, up, reference_prices(up, toy_calendar))
        assert bumped[4] > base[4]


class TestNegativeLogLikelihood:
    def test_uniform_single_observation(self):
        params = MnlParams((0, 0, 0), (1e-4,), (0.0,), single_bucket_map(7))
        obs = ChoiceObservation(
            prices=(0,) * 7, reference=(0,) * 7, offered=(True,) * 7, chosen=3
        )
        # beta at its floor times zero price leaves exactly uniform odds.
        assert negative_log_likelihood(params, [obs]) == pytest.approx(
            np.log(8), abs=1e-12
        )

    def test_toy_example_option3(self, toy_params):
        obs = ChoiceObservation(
            prices=tuple(TOY_PRICES),
            reference=tuple(TOY_REF),
            offered=(True,) * 7,
            chosen=3,
        )
        assert negative_log_likelihood(toy_params, [obs]) == pytest.approx(
            -np.log(TOY_P3), rel=1e-12
        )

    def test_compositional_over_rows(self, toy_calendar):
        rng = np.random.default_rng(4)
        bm = default_bucket_map(toy_calendar)
        params = random_params(rng, bm)
        data = random_choice_data(rng, 50, L=7)
        total = 0.0
        for n in range(50):
            probs = choice_probabilities(
                params, data.prices[n], data.reference[n], data.offered[n]
            )
            total -= np.log(probs[data.chosen[n]])
        assert negative_log_likelihood(params, data) == pytest.approx(total, rel=1e-12)

    def test_chosen_must_be_offered(self):
        with pytest.raises(ValueError):
            ChoiceObservation(
                prices=(1.0, 2.0),
                reference=(1.0, 2.0),
                offered=(True, False),
                chosen=2,
            )


class TestGradient:
    def test_matches_central_finite_differences(self):
        rng = np.random.default_rng(5)
        cal = LeadTimeCalendar(14, DayOfWeek.MONDAY)
        bm = default_bucket_map(cal)
        data = random_choice_data(rng, 300, L=14)

        for _ in range(10):
            params = random_params(rng, bm)
            theta = params.to_vector()

            def nll_at(t):
                return negative_log_likelihood(MnlParams.from_vector(t, bm), data)

            grad = nll_gradient(params, data)
            approx = finite_difference_gradient(nll_at, theta, step=1e-5)
            np.testing.assert_allclose(grad, approx, rtol=1e-6, atol=1e-5)

    def test_reference_term_vanishes_when_price_equals_reference(self):
        rng = np.random.default_rng(6)
        bm = single_bucket_map(7)
        params = MnlParams((0.01, 0.0, 0.02), (0.1,), (5.0,), bm)
        prices = rng.uniform(5, 20, size=(40, 7))
        data = ChoiceData(
            prices, prices.copy(), np.ones((40, 7), dtype=bool),
            rng.integers(0, 8, size=40),
        )
        grad = nll_gradient(params, data)
        assert grad[4] == 0.0   # the gamma coordinate

    def test_single_observation_score_identity(self, toy_params):
        # Gradient of one row = expected features minus observed features.
        from schedprice.mnl import build_feature_tensor

        obs = ChoiceData(
            TOY_PRICES[None, :],
            TOY_REF[None, :],
            np.ones((1, 7), dtype=bool),
            np.array([3]),
        )
        feats = build_feature_tensor(obs, toy_params.bucket_map)[0]
        utils = utilities_oracle(
            toy_params.alpha,
            toy_params.beta_per_option(),
            toy_params.gamma_per_option(),
            TOY_PRICES,
            TOY_REF,
        )
        probs = np.asarray(mnl_probs_oracle(utils))
        expected = probs[1:] @ feats - feats[2]
        np.testing.assert_allclose(nll_gradient(toy_params, obs), expected, rtol=1e-10)


class TestFitMle:
    def test_recovers_planted_parameters(self):
        truth = make_preset("ref-effect")
        log = generate_quotes(
            truth, 50_000, ExplorationPricing(tuple(range(6, 31)), seed=1), seed=0
        )
        params = fit_mle(log.data.choices, single_bucket_map(7))
        se = standard_errors(params, log.data.choices)
        assert params.beta[0] == pytest.approx(0.10, rel=0.10)
        assert abs(params.beta[0] - 0.10) <= 3 * se[3]
        assert params.gamma[0] == pytest.approx(0.05, rel=0.10)
        assert abs(params.gamma[0] - 0.05) <= 3 * se[4]

    def test_gamma_zero_truth_not_significant(self):
        truth = make_preset("uniform")   # planted gamma = 0
        log = generate_quotes(
            truth, 30_000, ExplorationPricing(tuple(range(6, 31)), seed=2), seed=1
        )
        params = fit_mle(log.data.choices, single_bucket_map(7))
        se = standard_errors(params, log.data.choices)
        assert params.gamma[0] < 1e-8 or abs(params.gamma[0]) < 2 * se[4]

    def test_fit_beats_zero_parameters(self):
        truth = make_preset("ref-effect")
        log = generate_quotes(
            truth, 2_000, ExplorationPricing(tuple(range(6, 31)), seed=3), seed=2
        )
        bm = single_bucket_map(7)
        fitted = fit_mle(log.data.choices, bm)
        zero = MnlParams((0, 0, 0), (1e-4,), (0.0,), bm)
        assert negative_log_likelihood(fitted, log.data.choices) <= (
            negative_log_likelihood(zero, log.data.choices)
        )

    def test_bounds_respected(self):
        truth = make_preset("uniform")
        log = generate_quotes(
            truth, 5_000, ExplorationPricing(tuple(range(6, 31)), seed=4), seed=3
        )
        cal = LeadTimeCalendar(7, DayOfWeek.SUNDAY)
        params = fit_mle(log.data.choices, default_bucket_map(cal))
        assert all(b >= 1e-4 for b in params.beta)
        assert all(g >= 0.0 for g in params.gamma)

    def test_convexity_midpoint(self, toy_calendar):
        rng = np.random.default_rng(8)
        bm = default_bucket_map(toy_calendar)
        data = random_choice_data(rng, 200, L=7)
        for _ in range(20):
            a = random_params(rng, bm).to_vector()
            b = random_params(rng, bm).to_vector()
            mid = MnlParams.from_vector((a + b) / 2, bm)
            lhs = negative_log_likelihood(mid, data)
            rhs = 0.5 * (
                negative_log_likelihood(MnlParams.from_vector(a, bm), data)
                + negative_log_likelihood(MnlParams.from_vector(b, bm), data)
            )
            assert lhs <= rhs + 1e-9

    def test_all_no_purchase_unidentifiable(self):
        prices = np.full((50, 7), 10.0)
        prices[:, 0] = 12.0
        data = ChoiceData(
            prices, prices.copy(), np.ones((50, 7), dtype=bool), np.zeros(50, dtype=int)
        )
        with pytest.raises(UnidentifiableFitError):
            fit_mle(data, single_bucket_map(7))

    def test_zero_price_variation_names_buckets(self):
        rng = np.random.default_rng(9)
        cal = LeadTimeCalendar(7, DayOfWeek.SUNDAY)
        bm = default_bucket_map(cal)
        prices = rng.uniform(5, 20, size=(200, 7))
        weekend = cal.weekend_indices()
        prices[:, weekend] = 10.0    # flatten the weekend bucket
        data = ChoiceData(
            prices, prices.copy(), np.ones((200, 7), dtype=bool),
            rng.integers(0, 8, size=200),
        )
        with pytest.raises(UnidentifiableFitError) as err:
            fit_mle(data, bm)
        assert err.value.buckets == (bm.bucket_of[int(weekend[0])],)
