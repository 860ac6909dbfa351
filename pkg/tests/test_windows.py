"""Second-level time-window model, click imputation, and window pricing."""

import numpy as np
import pytest

from schedprice.windows import (
    SecondLevelObservation,
    UnconvertedQuote,
    WindowCatalog,
    WindowFitConfig,
    WindowMnlParams,
    combined_objective,
    fit_window_model,
    impute_clicks,
    price_windows,
    window_features,
    window_probabilities,
)

from oracles import mnl_probs_oracle


def simple_params(m=4, beta=0.1, delta=0.0, alpha=None, gamma=()):
    return WindowMnlParams(
        alpha=alpha if alpha is not None else (0.0,) * m,
        beta=beta,
        gamma_vec=gamma,
        delta=delta,
    )


class TestWindowCatalog:
    def test_standard_bucketings(self):
        for m, length in ((12, 2), (8, 3), (6, 4), (4, 6)):
            catalog = WindowCatalog.standard(m)
            assert catalog.num_windows == m
            assert all(n == length for _, n in catalog.windows)
            assert catalog.windows[0] == (0, length)

    def test_custom_set_allowed(self):
        catalog = WindowCatalog(((8, 4), (12, 4), (16, 6)))
        assert catalog.num_windows == 3

    def test_rejects_unsorted_or_empty(self):
        with pytest.raises(ValueError):
            WindowCatalog(())
        with pytest.raises(ValueError):
            WindowCatalog(((12, 2), (8, 2)))
        with pytest.raises(ValueError):
            WindowCatalog.standard(5)


class TestWindowProbabilities:
    def test_uniform_when_zero(self):
        params = simple_params(m=4, beta=1e-4)
        probs = window_probabilities(params, np.zeros(0), np.zeros(4))
        np.testing.assert_allclose(probs, np.full(5, 0.2), atol=1e-6)

    def test_cheaper_window_more_likely(self):
        params = simple_params(m=2, beta=0.1)
        probs = window_probabilities(params, np.zeros(0), np.array([8.0, 10.0]))
        assert probs[1] > probs[2]

    def test_matches_formula_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            m = int(rng.integers(2, 9))
            n_feat = int(rng.integers(0, 4))
            params = WindowMnlParams(
                alpha=tuple(rng.normal(0, 0.5, m)),
                beta=float(rng.uniform(0.05, 0.3)),
                gamma_vec=tuple(rng.normal(0, 0.2, n_feat)),
                delta=float(rng.normal(0, 0.1)),
            )
            x = rng.normal(0, 1, n_feat)
            prices = rng.uniform(1, 20, m)
            utils = [
                params.alpha[j]
                - params.beta * prices[j]
                + float(np.dot(params.gamma_vec, x))
                + params.delta * (j + 1)
                for j in range(m)
            ]
            np.testing.assert_allclose(
                window_probabilities(params, x, prices),
                mnl_probs_oracle(utils),
                rtol=1e-12,
            )

    def test_sums_to_one(self):
        rng = np.random.default_rng(1)
        params = simple_params(m=8, beta=0.2, delta=-0.1)
        for _ in range(100):
            probs = window_probabilities(params, np.zeros(0), rng.uniform(0, 30, 8))
            assert probs.sum() == pytest.approx(1.0, abs=1e-12)


class TestImputeClicks:
    def _rows(self, base_probs, n, m=4, L=3):
        wp = np.tile(np.arange(1.0, m + 1), (L, 1))
        return [
            UnconvertedQuote(
                features_base=(1.0,), base_probs=np.asarray(base_probs), window_prices=wp
            )
            for _ in range(n)
        ]

    def test_concentrated_mass_goes_to_mode(self):
        base = np.array([0.2, 0.004, 0.792, 0.004])   # option 2 has 99% of mass
        rows = self._rows(base, 10_000, L=3)
        obs, dropped = impute_clicks(rows, seed=0)
        assert dropped == 0
        lead = np.array([o.features[-1] for o in obs])
        assert np.mean(lead == 2) >= 0.95
        assert all(o.imputed and o.chosen_window == 0 for o in obs)

    def test_deterministic_in_seed(self):
        base = np.array([0.4, 0.3, 0.2, 0.1])
        rows = self._rows(base, 500, L=3)
        a, _ = impute_clicks(rows, seed=42)
        b, _ = impute_clicks(rows, seed=42)
        c, _ = impute_clicks(rows, seed=43)
        assert [o.features for o in a] == [o.features for o in b]
        assert [o.features for o in a] != [o.features for o in c]

    def test_zero_purchase_mass_dropped(self):
        base = np.array([1.0, 0.0, 0.0, 0.0])
        rows = self._rows(base, 10, L=3)
        obs, dropped = impute_clicks(rows, seed=1)
        assert obs == [] and dropped == 10

    def test_window_prices_taken_from_imputed_lead_time(self):
        base = np.array([0.5, 0.0, 0.5, 0.0])   # always lead time 2
        wp = np.arange(12.0).reshape(3, 4)
        rows = [UnconvertedQuote((0.5,), base, wp)]
        obs, _ = impute_clicks(rows, seed=3)
        assert obs[0].window_prices == tuple(wp[1])
        assert obs[0].features == (0.5, 2.0)


class TestFitWindowModel:
    def _simulate_rows(self, n, params, seed, m=4, price_lo=4, price_hi=20):
        rng = np.random.default_rng(seed)
        rows = []
        for _ in range(n):
            x = (float(rng.uniform(0, 10)), float(rng.integers(1, 8)))
            prices = rng.uniform(price_lo, price_hi, m)
            probs = window_probabilities(params, np.asarray(x), prices)
            chosen = int(rng.choice(m + 1, p=probs))
            rows.append(
                SecondLevelObservation(
                    features=x, window_prices=tuple(prices), chosen_window=chosen
                )
            )
        return rows

    def test_recovery_of_beta_and_delta(self):
        # Eight windows give the window-index coefficient enough spread to
        # be estimated tightly at this sample size.
        planted = WindowMnlParams(
            alpha=(0.3,) * 8,
            beta=0.15,
            gamma_vec=(0.02, 0.05),
            delta=-0.05,
        )
        rows = self._simulate_rows(50_000, planted, seed=0, m=8)
        fitted = fit_window_model(rows)
        assert fitted.beta == pytest.approx(0.15, rel=0.10)
        assert fitted.delta == pytest.approx(-0.05, rel=0.10)
        # the constant planted intercepts come back (orthogonalized basis)
        np.testing.assert_allclose(fitted.alpha, np.mean(fitted.alpha), atol=0.08)

    def test_fitted_nll_beats_zero_params(self):
        planted = simple_params(
            m=4, beta=0.12, delta=0.05, alpha=(0.1, 0, 0.2, 0), gamma=(0.0, 0.0)
        )
        rows = self._simulate_rows(3_000, planted, seed=1)
        fitted = fit_window_model(rows)
        from schedprice.windows import window_nll

        zero = WindowMnlParams((0.0,) * 4, 1e-4, (0.0, 0.0), 0.0)
        assert window_nll(fitted, rows) <= window_nll(zero, rows)

    def test_gradient_at_optimum_within_tolerance(self):
        planted = simple_params(m=4, beta=0.12, delta=0.0, gamma=(0.05, 0.0))
        rows = self._simulate_rows(4_000, planted, seed=2)
        fitted = fit_window_model(rows, WindowFitConfig(tol=1e-6))
        # finite-difference gradient of the fitted NLL w.r.t. beta and delta
        from schedprice.windows import window_nll

        h = 1e-5
        for attr in ("beta", "delta"):
            up = dict(alpha=fitted.alpha, beta=fitted.beta, gamma_vec=fitted.gamma_vec,
                      delta=fitted.delta, feature_names=fitted.feature_names)
            down = dict(up)
            up[attr] = getattr(fitted, attr) + h
            down[attr] = getattr(fitted, attr) - h
            d = (window_nll(WindowMnlParams(**up), rows)
                 - window_nll(WindowMnlParams(**down), rows)) / (2 * h)
            # The fit reaches 1e-6 on its own (orthogonalized) coordinates;
            # beta/delta finite differences see the same stationarity up to
            # the FD truncation error at this sample size.
            assert abs(d) < 5e-2

    def test_unidentifiable_cases(self):
        with pytest.raises(ValueError):
            fit_window_model([])
        rows = [
            SecondLevelObservation((0.0,), (5.0, 5.0), 0),
            SecondLevelObservation((0.0,), (5.0, 5.0), 0),
        ]
        with pytest.raises(ValueError):
            fit_window_model(rows)   # no purchases


class TestPriceWindows:
    def test_equal_costs_force_uniform_prices(self):
        params = simple_params(m=4, beta=0.1)
        prices = price_windows(
            1, 12.0, np.full(4, 6.0), params, np.zeros(0), price_ceiling=30.0
        )
        np.testing.assert_array_equal(prices, np.full(4, 12.0))

    def test_min_window_price_equals_first_level_exactly(self):
        rng = np.random.default_rng(4)
        params = simple_params(m=4, beta=0.15, delta=-0.02)
        for _ in range(100):
            costs = rng.uniform(3, 12, 4)
            p1 = float(rng.integers(8, 25))
            prices = price_windows(2, p1, costs, params, np.zeros(0), 40.0)
            assert prices.min() == p1
            assert np.all(prices >= p1)

    def test_matches_fine_grid_oracle(self):
        # M=2, costs (4, 6), first-level price 7: check against a 10x finer
        # 1-D sweep of the same constrained family.
        params = simple_params(m=2, beta=0.2)
        costs = np.array([4.0, 6.0])
        got = price_windows(
            1, 7.0, costs, params, np.zeros(0), 30.0,
        )
        m3_fine = np.linspace(0.0, 26.0, 2601)
        best_val, best_prices = -np.inf, None
        for m3 in m3_fine:
            prices = np.array([7.0, min(max(7.0, 6.0 + m3), 30.0)])
            utils = [-0.2 * prices[0], -0.2 * prices[1]]
            probs = mnl_probs_oracle(utils)
            value = probs[1] * (prices[0] - 4.0) + probs[2] * (prices[1] - 6.0)
            if value > best_val:
                best_val, best_prices = value, prices
        from schedprice.kernels import mnl_probabilities

        util = (-0.2 * got)[None, :]
        probs = mnl_probabilities(np.ascontiguousarray(util), np.ones((1, 2), bool))[0]
        got_val = probs[1] * (got[0] - 4.0) + probs[2] * (got[1] - 6.0)
        step = 26.0 / 100
        neighbor = abs(
            best_val
            - max(
                _constrained_value(best_prices[1] - step),
                _constrained_value(best_prices[1] + step),
            )
        )
        assert got_val >= best_val - max(neighbor, 1e-9)

    def test_empty_costs_rejected(self):
        params = simple_params(m=2)
        with pytest.raises(ValueError):
            price_windows(1, 10.0, np.zeros(0), params, np.zeros(0), 20.0)


def _constrained_value(p2):
    p2 = min(max(7.0, p2), 30.0)
    utils = [-0.2 * 7.0, -0.2 * p2]
    probs = mnl_probs_oracle(utils)
    return probs[1] * 3.0 + probs[2] * (p2 - 6.0)


class TestCombinedObjective:
    def test_single_branch_arithmetic(self):
        # Feature vector is (lead_time,) at the second level.
        params = simple_params(m=1, beta=0.1, gamma=(0.0,))
        base = np.array([0.5, 0.5])
        prices = np.array([[10.0]])
        costs = np.array([[4.0]])
        probs2 = window_probabilities(params, window_features((), 1), prices[0])
        expected = 1.0 * (10.0 - 4.0) * probs2[1]
        got = combined_objective((), base, params, prices, costs)
        assert got == pytest.approx(expected, rel=1e-12)

    def test_hand_case_two_by_two(self):
        # Window model with zero coefficients: P(Y2=j) = 1/3 each branch;
        # the feature vector is just (lead_time,).
        params = WindowMnlParams((0.0, 0.0), 1e-4, (0.0,), 0.0)
        base = np.array([0.5, 0.25, 0.25])
        prices = np.zeros((2, 2))
        costs = np.full((2, 2), -1.0)   # unit margins at zero prices
        got = combined_objective((), base, params, prices, costs)
        # weights: 0.5/0.5 each; margins 1 per window; windows sum ~ 2/3
        assert got == pytest.approx(0.5 * (2 / 3) + 0.5 * (2 / 3), abs=1e-3)

    def test_margin_linearity(self):
        rng = np.random.default_rng(5)
        params = simple_params(m=3, beta=0.1, delta=0.05, gamma=(0.1, 0.0))
        base = np.array([0.4, 0.3, 0.3])
        prices = rng.uniform(5, 15, size=(2, 3))
        costs = prices - rng.uniform(1, 3, size=(2, 3))
        v1 = combined_objective((2.0,), base, params, prices, costs)
        v2 = combined_objective((2.0,), base, params, prices, prices - 2 * (prices - costs))
        assert v2 == pytest.approx(2 * v1, rel=1e-9)

    def test_weights_renormalize_to_one(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            raw = rng.uniform(0.01, 1, size=5)
            base = raw / raw.sum()
            weights = base[1:] / (1 - base[0])
            assert weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_no_purchase_mass_rejected(self):
        params = simple_params(m=2)
        base = np.array([1.0, 0.0, 0.0])
        with pytest.raises(ValueError):
            combined_objective((), base, params, np.zeros((2, 2)), np.zeros((2, 2)))
