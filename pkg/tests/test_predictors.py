"""Cost table and cancellation predictors."""

import logging

import numpy as np
import pytest

from schedprice.calendar import DayOfWeek, LeadTimeCalendar
from schedprice.features import FeatureSchema, FeatureSpec, FeatureTable
from schedprice.predictors import (
    ConstantCancellation,
    LogisticCancellation,
    SegmentedCancellation,
    TableCostModel,
    cancel_probability,
    fit_cancellation,
    keep_probability_vector,
)


@pytest.fixture
def calendar():
    return LeadTimeCalendar(7, DayOfWeek.SUNDAY)


class TestCostTable:
    def test_constant_table(self, calendar):
        model = TableCostModel(key_features=(), table={}, default=(8.0,) * 7)
        np.testing.assert_array_equal(
            model.expected_costs({"anything": 1}, calendar), np.full(7, 8.0)
        )

    def test_key_lookup_ignores_non_key_features(self, calendar):
        model = TableCostModel(
            key_features=("region",),
            table={("north",): tuple(float(c) for c in range(1, 8))},
            default=(9.0,) * 7,
        )
        a = model.expected_costs({"region": "north", "distance": 1.0}, calendar)
        b = model.expected_costs({"region": "north", "distance": 99.0}, calendar)
        np.testing.assert_array_equal(a, b)
        assert a[0] == 1.0

    def test_unknown_key_falls_back_with_warning(self, calendar, caplog):
        model = TableCostModel(
            key_features=("region",),
            table={("north",): (1.0,) * 7},
            default=(9.0,) * 7,
        )
        with caplog.at_level(logging.WARNING):
            costs = model.expected_costs({"region": "mars"}, calendar)
        np.testing.assert_array_equal(costs, np.full(7, 9.0))
        assert any("cost row" in r.message for r in caplog.records)

    def test_csv_round_trip(self, tmp_path, calendar):
        model = TableCostModel(
            key_features=("region",),
            table={("north",): (1.0, 2, 3, 4, 5, 6, 7), ("south",): (7.0, 6, 5, 4, 3, 2, 1)},
            default=(9.0,) * 7,
        )
        path = tmp_path / "costs.csv"
        model.to_csv(path)
        back = TableCostModel.from_csv(path, 7)
        assert back.key_features == ("region",)
        np.testing.assert_array_equal(
            back.expected_costs({"region": "south"}, calendar),
            model.expected_costs({"region": "south"}, calendar),
        )
        np.testing.assert_array_equal(back.default, model.default)

    def test_declining_simulator_curve_round_trip(self, tmp_path, calendar):
        from schedprice.simulate import make_preset

        truth = make_preset("ref-effect")
        model = TableCostModel(key_features=(), table={}, default=truth.cost_curve)
        path = tmp_path / "sim_costs.csv"
        model.to_csv(path)
        back = TableCostModel.from_csv(path, 7)
        np.testing.assert_array_equal(
            back.expected_costs({}, calendar), np.asarray(truth.cost_curve)
        )
        # qualitative shape: costs decline with lead time
        curve = np.asarray(truth.cost_curve)
        assert np.all(np.diff(curve) <= 0)


def _empty_features(n):
    schema = FeatureSchema(())
    return FeatureTable(schema, {}, {}), schema


class TestFitCancellation:
    def test_all_executed_gives_clipped_constant(self):
        schema = FeatureSchema((FeatureSpec("d", "numeric"),))
        table = FeatureTable.from_rows([{"d": 1.0}] * 50, schema)
        model = fit_cancellation(table, np.ones(50, dtype=int), np.zeros(50, dtype=bool), 7)
        assert isinstance(model, ConstantCancellation)
        assert model.rate == pytest.approx(1e-4)

    def test_intercept_only_matches_empirical_rate(self):
        n = 10_000
        canceled = np.zeros(n, dtype=bool)
        canceled[:3_000] = True
        table = FeatureTable(FeatureSchema(()), {}, {}, n_rows=n)
        model = fit_cancellation(table, np.ones(n, dtype=int), canceled, 1)
        rate = cancel_probability(model, np.zeros(0), 1)
        assert rate == pytest.approx(0.300, abs=1e-3)

    def test_logistic_recovery_within_three_se(self):
        rng = np.random.default_rng(0)
        n = 20_000
        x = rng.uniform(-1, 1, size=n)
        chosen = rng.integers(1, 8, size=n)
        true_intercept, true_slope, true_lead = -1.0, 0.8, 0.15
        z = true_intercept + true_slope * x + true_lead * chosen
        canceled = rng.random(n) < 1 / (1 + np.exp(-z))
        schema = FeatureSchema((FeatureSpec("x", "numeric"),))
        table = FeatureTable(schema, {"x": x}, {})
        model = fit_cancellation(table, chosen, canceled, 7)
        assert isinstance(model, LogisticCancellation)
        # Wald standard errors from the logistic information matrix.
        design = np.column_stack(
            [np.ones(n), x] + [(chosen == i).astype(float) for i in range(1, 8)]
        )
        theta = np.array([model.intercept, *model.feature_coefs, *model.option_coefs])
        p = 1 / (1 + np.exp(-(design @ theta)))
        info = design.T @ (design * (p * (1 - p))[:, None])
        se = np.sqrt(np.diag(np.linalg.pinv(info)))
        assert abs(model.feature_coefs[0] - true_slope) < 3 * se[1]
        # Per-option coefficients absorb intercept+lead*i jointly; check the
        # fitted cancellation curve against truth at a few options instead.
        for i in (1, 4, 7):
            fitted = cancel_probability(model, np.array([0.0]), i)
            truth = 1 / (1 + np.exp(-(true_intercept + true_lead * i)))
            assert fitted == pytest.approx(truth, abs=0.03)

    def test_monotone_planted_option_trend(self):
        model = LogisticCancellation(
            intercept=-2.0,
            feature_coefs=(),
            option_coefs=tuple(0.1 * i for i in range(1, 8)),
            feature_names=(),
        )
        rates = [cancel_probability(model, np.zeros(0), i) for i in range(1, 8)]
        assert all(a < b for a, b in zip(rates, rates[1:]))

    def test_constant_complement_is_exact(self):
        model = ConstantCancellation(rate=0.25)
        keep = keep_probability_vector(model, np.zeros(0), 5)
        cancels = np.array([cancel_probability(model, np.zeros(0), i) for i in range(1, 6)])
        np.testing.assert_array_equal(keep + cancels, np.ones(5))

    def test_no_booked_rows_rejected(self):
        table = FeatureTable(FeatureSchema(()), {}, {}, n_rows=10)
        with pytest.raises(ValueError):
            fit_cancellation(table, np.zeros(10, dtype=int), np.zeros(10, dtype=bool), 7)


class TestSegmentedCancellation:
    def test_fallback_to_global(self):
        seg = SegmentedCancellation(
            by_segment={1: ConstantCancellation(0.1)},
            global_model=ConstantCancellation(0.2),
        )
        assert seg.for_segment(1).rate == 0.1
        assert seg.for_segment(99).rate == 0.2
