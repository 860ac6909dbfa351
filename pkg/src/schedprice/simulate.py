"""Synthetic marketplace: planted ground truth, quote generation, model
evaluation metrics, and an A/B harness for pricing policies.

Everything is keyed off one master seed with per-stream derivation, so a
configuration reproduces its logs and reports bit-for-bit.  The planted
parameters satisfy the same bounds the fitted ones do, which makes the
simulator a ground-truth oracle for estimator-recovery tests.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np
from scipy import stats as scipy_stats

from .calendar import DayOfWeek, LeadTimeCalendar, reference_prices_matrix
from .dataset import SecondLevelData, TrainingSet
from .features import CATEGORICAL, NUMERIC, FeatureSchema, FeatureSpec, FeatureTable
from .kernels import mnl_probabilities
from .mnl import (
    BucketMap,
    ChoiceData,
    MnlParams,
    FitConfig,
    fit_mle,
    single_bucket_map,
)
from .pricing import (
    GridConfig,
    Guardrails,
    ObjectiveConfig,
    PricingPolicy,
    optimize_two_param,
)
from .tree import SegmentationTree, route
from .windows import WindowMnlParams

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Planted ground truth


@dataclass(frozen=True)
class NumericFeatureGen:
    name: str
    low: float
    high: float

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.low, self.high, size=n)


@dataclass(frozen=True)
class CategoricalFeatureGen:
    name: str
    symbols: tuple[str, ...]
    weights: tuple[float, ...] = ()

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        w = np.asarray(self.weights or (1.0,) * len(self.symbols), dtype=np.float64)
        return rng.choice(len(self.symbols), size=n, p=w / w.sum())


FeatureGen = NumericFeatureGen | CategoricalFeatureGen


@dataclass(frozen=True)
class SegmentRule:
    """Conjunction of simple conditions; an empty rule matches everything."""

    conditions: tuple[tuple[str, str, object], ...] = ()

    def mask(self, features: FeatureTable) -> np.ndarray:
        out = np.ones(len(features), dtype=bool)
        for name, op, value in self.conditions:
            spec = features.schema.spec(name)
            if spec.kind == NUMERIC:
                col = features.numeric[name]
                if op == "<=":
                    out &= col <= float(value)
                elif op == ">":
                    out &= col > float(value)
                else:
                    raise ValueError(f"numeric rule op {op!r} unsupported")
            else:
                code = spec.vocabulary.index(str(value))
                col = features.codes[name]
                if op == "==":
                    out &= col == code
                elif op == "!=":
                    out &= col != code
                else:
                    raise ValueError(f"categorical rule op {op!r} unsupported")
        return out


@dataclass(frozen=True)
class PlantedSegment:
    name: str
    rule: SegmentRule
    params: MnlParams


@dataclass(frozen=True)
class CancellationTruth:
    """Logistic cancellation: intercept + numeric feature terms + lead-time term."""

    intercept: float
    feature_coefs: tuple[tuple[str, float], ...] = ()
    lead_time_coef: float = 0.0

    def logits(self, features: FeatureTable, chosen: np.ndarray) -> np.ndarray:
        z = np.full(len(features), self.intercept)
        for name, coef in self.feature_coefs:
            z += coef * np.nan_to_num(features.numeric[name], nan=0.0)
        return z + self.lead_time_coef * chosen


@dataclass(frozen=True)
class GroundTruth:
    """Everything the synthetic marketplace needs to sample a quote."""

    num_options: int
    feature_gens: tuple[FeatureGen, ...]
    segments: tuple[PlantedSegment, ...]      # first matching rule wins
    cost_curve: tuple[float, ...]             # per-option expected cost
    cancellation: CancellationTruth
    window_params: WindowMnlParams | None = None
    window_cost_offsets: tuple[float, ...] = ()   # per-window add-on to cost_curve
    start_day: DayOfWeek | None = DayOfWeek.SUNDAY  # None = cycle through all 7
    availability_dropout: float = 0.0
    base_timestamp: str = "2025-06-02T00:00:00"
    quote_spacing_seconds: int = 60

    def __post_init__(self) -> None:
        if len(self.cost_curve) != self.num_options:
            raise ValueError("cost curve length mismatch")
        for seg in self.segments:
            if seg.params.num_options != self.num_options:
                raise ValueError(f"segment {seg.name!r} has wrong option count")
        if self.window_params is not None and not self.window_cost_offsets:
            raise ValueError("window model needs window_cost_offsets")

    @property
    def schema(self) -> FeatureSchema:
        specs = []
        for gen in self.feature_gens:
            if isinstance(gen, NumericFeatureGen):
                specs.append(FeatureSpec(gen.name, NUMERIC))
            else:
                specs.append(FeatureSpec(gen.name, CATEGORICAL, gen.symbols))
        return FeatureSchema(tuple(specs))

    @property
    def num_windows(self) -> int:
        return len(self.window_cost_offsets)

    def numeric_feature_names(self) -> tuple[str, ...]:
        return tuple(
            g.name for g in self.feature_gens if isinstance(g, NumericFeatureGen)
        )

    def window_cost_matrix(self) -> np.ndarray:
        """(L, M) window costs: option cost plus the per-window offset."""
        curve = np.asarray(self.cost_curve, dtype=np.float64)
        offsets = np.asarray(self.window_cost_offsets, dtype=np.float64)
        return np.rint(curve[:, None] + offsets[None, :])

    def segment_index(self, features: FeatureTable) -> np.ndarray:
        idx = np.full(len(features), -1, dtype=np.int64)
        for k, seg in enumerate(self.segments):
            hit = seg.rule.mask(features) & (idx < 0)
            idx[hit] = k
        if (idx < 0).any():
            raise ValueError("some rows match no planted segment; add a catch-all")
        return idx


# ---------------------------------------------------------------------------
# Pricing policy callables


class PricingCallback(Protocol):
    def __call__(
        self,
        x: Mapping[str, object],
        calendar: LeadTimeCalendar,
        costs: np.ndarray,
    ) -> np.ndarray:
        ...


@dataclass
class FixedPricing:
    prices: tuple[float, ...]

    def __call__(self, x, calendar, costs) -> np.ndarray:
        return np.asarray(self.prices, dtype=np.float64)


@dataclass
class ExplorationPricing:
    """Uniform random prices from a discrete grid; the legacy trainer's food."""

    price_grid: tuple[float, ...]
    seed: int

    def __post_init__(self) -> None:
        self._rng = np.random.default_rng(self.seed)

    def __call__(self, x, calendar, costs) -> np.ndarray:
        grid = np.asarray(self.price_grid, dtype=np.float64)
        return grid[self._rng.integers(0, grid.size, size=calendar.num_options)]


@dataclass
class FrameworkPolicy:
    """Two-parameter policy optimization behind a routing function.

    Results are memoized on (segment, calendar, cost vector); with no
    per-quote cancellation features the serving price is a pure function
    of that key.
    """

    route_fn: Callable[[Mapping[str, object]], tuple[int, MnlParams]]
    guardrails: Guardrails
    objective: ObjectiveConfig = field(default_factory=lambda: ObjectiveConfig(include_cancellation=False))
    grid: GridConfig = field(default_factory=GridConfig)
    quantize: bool = True
    cache_enabled: bool = True

    def __post_init__(self) -> None:
        self._cache: dict = {}

    @classmethod
    def from_tree(cls, tree: SegmentationTree, guardrails: Guardrails, **kw) -> "FrameworkPolicy":
        return cls(route_fn=lambda x: route(tree, x), guardrails=guardrails, **kw)

    @classmethod
    def from_params(cls, params: MnlParams, guardrails: Guardrails, **kw) -> "FrameworkPolicy":
        return cls(route_fn=lambda x: (0, params), guardrails=guardrails, **kw)

    def __call__(self, x, calendar, costs) -> np.ndarray:
        segment_id, params = self.route_fn(x)
        key = (
            segment_id,
            int(calendar.start_day_of_week),
            calendar.availability,
            tuple(np.asarray(costs, dtype=np.float64)),
        )
        if self.cache_enabled and key in self._cache:
            return self._cache[key]
        _, prices, _ = optimize_two_param(
            x, params, costs, None, calendar, self.guardrails, self.objective, self.grid
        )
        if self.quantize:
            prices = np.rint(prices)
        if self.cache_enabled:
            self._cache[key] = prices
        return prices


@dataclass
class LegacyPerOptionPricer:
    """Miniature of the per-option legacy system: each lead time gets an
    independently estimated conversion-vs-price curve (no substitution)
    and an independently grid-maximized price."""

    price_grid: tuple[float, ...]
    conversion: np.ndarray          # (L, K) smoothed P(chosen = i | p_i = grid_k)
    guardrails: Guardrails
    alpha: float = 0.0

    @classmethod
    def fit(
        cls,
        log: "SimLog",
        price_grid: Sequence[float],
        guardrails: Guardrails,
        alpha: float = 0.0,
    ) -> "LegacyPerOptionPricer":
        grid = np.asarray(sorted(price_grid), dtype=np.float64)
        data = log.data
        n_opts = data.num_options
        conv = np.zeros((n_opts, grid.size))
        prices = data.choices.prices
        chosen = data.choices.chosen
        for i in range(n_opts):
            bucket = np.searchsorted(grid, prices[:, i])
            bucket = np.clip(bucket, 0, grid.size - 1)
            for k in range(grid.size):
                rows = bucket == k
                hits = float(np.sum((chosen == i + 1) & rows))
                # Laplace smoothing keeps empty price cells usable.
                conv[i, k] = (hits + 1.0) / (float(rows.sum()) + 2.0)
        return cls(tuple(grid), conv, guardrails, alpha)

    def __call__(self, x, calendar, costs) -> np.ndarray:
        grid = np.asarray(self.price_grid, dtype=np.float64)
        costs = np.asarray(costs, dtype=np.float64)
        floor, ceiling = self.guardrails.arrays()
        prices = np.empty(calendar.num_options)
        for i in range(calendar.num_options):
            weight = (1.0 - self.alpha) * (grid - costs[i]) + self.alpha * costs[i]
            feasible = (grid >= floor[i]) & (grid <= ceiling[i])
            objective = np.where(feasible, weight * self.conversion[i], -np.inf)
            prices[i] = grid[int(np.argmax(objective))]
        return prices


# ---------------------------------------------------------------------------
# Quote generation


@dataclass
class SimLog:
    """Generated marketplace log plus simulation-only diagnostics."""

    data: TrainingSet
    segment_index: np.ndarray        # (N,) planted segment per quote
    true_clicked: np.ndarray         # (N,) clicked lead time, 0 when none sampled

    @property
    def num_quotes(self) -> int:
        return self.data.num_rows

    @property
    def num_conversions(self) -> int:
        return int((self.data.choices.chosen > 0).sum())

    @property
    def num_cancellations(self) -> int:
        return int(self.data.canceled.sum())


def _derive_rngs(seed: int, names: Sequence[str]) -> dict[str, np.random.Generator]:
    streams = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(s) for name, s in zip(names, streams)}


def generate_quotes(
    truth: GroundTruth,
    n: int,
    pricing: PricingCallback,
    seed: int,
    window_pricing: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
    arm_of: np.ndarray | None = None,
) -> SimLog:
    """Sample ``n`` quotes end to end under a pricing callback.

    Per quote: sample features, build the calendar, price via the
    callback (prices are quantized to whole minor units), recompute
    reference prices, sample the first-level choice, then cancellation;
    with a planted window model, sample the click and the second-level
    choice instead, using ``window_pricing(prices, costs) -> (L, M)``.
    ``arm_of`` lets an A/B harness pass per-quote policies.
    """
    if n < 1:
        raise ValueError("need at least one quote")
    rngs = _derive_rngs(
        seed, ["features", "availability", "choice", "cancel", "click", "window"]
    )
    schema = truth.schema
    numeric: dict[str, np.ndarray] = {}
    codes: dict[str, np.ndarray] = {}
    for gen in truth.feature_gens:
        col = gen.sample(rngs["features"], n)
        if isinstance(gen, NumericFeatureGen):
            numeric[gen.name] = col
        else:
            codes[gen.name] = col
    features = FeatureTable(schema, numeric, codes)
    segment_idx = truth.segment_index(features)

    L = truth.num_options
    if truth.start_day is None:
        start_days = np.arange(n, dtype=np.int64) % 7
    else:
        start_days = np.full(n, int(truth.start_day), dtype=np.int64)
    if truth.availability_dropout > 0:
        offered = rngs["availability"].random((n, L)) >= truth.availability_dropout
        empty = ~offered.any(axis=1)
        offered[empty, 0] = True
    else:
        offered = np.ones((n, L), dtype=bool)

    base_costs = np.rint(np.asarray(truth.cost_curve, dtype=np.float64))
    costs = np.tile(base_costs, (n, 1))
    prices = np.empty((n, L))
    calendars: dict[tuple, LeadTimeCalendar] = {}
    for q in range(n):
        cal_key = (int(start_days[q]), tuple(offered[q]))
        cal = calendars.get(cal_key)
        if cal is None:
            cal = LeadTimeCalendar(L, DayOfWeek(int(start_days[q])), tuple(offered[q]))
            calendars[cal_key] = cal
        callback = pricing if arm_of is None else pricing[arm_of[q]]
        p = np.asarray(callback(features.row(q), cal, base_costs), dtype=np.float64)
        if p.shape != (L,):
            raise ValueError(f"pricing callback returned shape {p.shape}")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("pricing callback returned negative or non-finite prices")
        prices[q] = np.rint(p)

    reference = np.empty_like(prices)
    row_groups: dict[tuple, list[int]] = {}
    for q in range(n):
        row_groups.setdefault((int(start_days[q]), tuple(offered[q])), []).append(q)
    for cal_key, rows in row_groups.items():
        cal = calendars[cal_key]
        idx = np.asarray(rows)
        reference[idx] = reference_prices_matrix(prices[idx], cal)

    probs = np.empty((n, L + 1))
    for k, seg in enumerate(truth.segments):
        rows = np.flatnonzero(segment_idx == k)
        if rows.size == 0:
            continue
        p_rows = prices[rows]
        util = (
            seg.params.trend()[None, :]
            - seg.params.beta_per_option()[None, :] * p_rows
            - seg.params.gamma_per_option()[None, :] * (p_rows - reference[rows])
        )
        probs[rows] = mnl_probabilities(
            np.ascontiguousarray(util), np.ascontiguousarray(offered[rows])
        )

    second_level: SecondLevelData | None = None
    if truth.window_params is None:
        u = rngs["choice"].random(n)
        chosen = (np.cumsum(probs, axis=1) < u[:, None]).sum(axis=1).astype(np.int64)
        true_clicked = np.zeros(n, dtype=np.int64)
    else:
        wp = truth.window_params
        M = truth.num_windows
        window_costs = truth.window_cost_matrix()
        if window_pricing is None:
            window_pricing = lambda p_row, c_mat: np.maximum(  # noqa: E731
                p_row[:, None], c_mat
            )
        window_prices = np.empty((n, L, M))
        for q in range(n):
            window_prices[q] = np.rint(window_pricing(prices[q], window_costs))
        # Every customer clicks one lead time (the no-purchase mass lives at
        # the second level), matching the combined-objective assumption.
        click_w = probs[:, 1:] / (1.0 - probs[:, 0])[:, None]
        u = rngs["click"].random(n)
        clicked = 1 + (np.cumsum(click_w, axis=1) < u[:, None]).sum(axis=1).astype(np.int64)
        clicked = np.minimum(clicked, L)
        x_numeric = np.column_stack(
            [features.numeric[name] for name in truth.numeric_feature_names()]
        ) if truth.numeric_feature_names() else np.zeros((n, 0))
        gathered = window_prices[np.arange(n), clicked - 1]    # (N, M)
        j = np.arange(1, M + 1, dtype=np.float64)
        util2 = (
            np.asarray(wp.alpha)[None, :]
            - wp.beta * gathered
            + (x_numeric @ np.asarray(wp.gamma_vec)[:-1])[:, None]
            + np.asarray(wp.gamma_vec)[-1] * clicked[:, None]
            + wp.delta * j[None, :]
        )
        probs2 = mnl_probabilities(
            np.ascontiguousarray(util2), np.ones((n, M), dtype=bool)
        )
        u2 = rngs["window"].random(n)
        chosen_window = (np.cumsum(probs2, axis=1) < u2[:, None]).sum(axis=1).astype(np.int64)
        chosen = np.where(chosen_window > 0, clicked, 0).astype(np.int64)
        true_clicked = clicked
        logged_clicked = np.where(chosen > 0, clicked, 0).astype(np.int64)
        second_level = SecondLevelData(
            clicked=logged_clicked,
            chosen_window=chosen_window,
            window_prices=window_prices,
            window_costs=np.tile(window_costs[None, :, :], (n, 1, 1)),
        )

    cancel_logit = truth.cancellation.logits(features, chosen)
    cancel_prob = 1.0 / (1.0 + np.exp(-cancel_logit))
    canceled = (rngs["cancel"].random(n) < cancel_prob) & (chosen > 0)

    base = np.datetime64(truth.base_timestamp, "s")
    timestamps = base + (np.arange(n) * truth.quote_spacing_seconds).astype("timedelta64[s]")
    data = TrainingSet(
        schema=schema,
        features=features,
        choices=ChoiceData(prices, reference, offered, chosen),
        timestamps=timestamps,
        start_days=start_days,
        costs=costs,
        canceled=canceled,
        quote_ids=[f"q{k:08d}" for k in range(n)],
        second_level=second_level,
    )
    return SimLog(data=data, segment_index=segment_idx, true_clicked=true_clicked)


# ---------------------------------------------------------------------------
# Metrics


@dataclass(frozen=True)
class MetricsReport:
    name: str
    n_rows: int
    nll: float | None = None
    brier: float | None = None
    per_option_conversion: tuple[float, ...] = ()
    realized_objective: float | None = None
    realized_se: float | None = None


def brier_score(predicted: np.ndarray, outcomes: np.ndarray) -> float:
    """Multiclass Brier score: mean over rows of sum_i (P_i - 1{Y=i})^2."""
    p = np.asarray(predicted, dtype=np.float64)
    y = np.asarray(outcomes, dtype=np.int64)
    if p.ndim != 2 or y.shape != (p.shape[0],):
        raise ValueError("predicted must be (N, K) with one outcome per row")
    sums = p.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        raise ValueError("predicted rows must sum to 1 within 1e-9")
    onehot = np.zeros_like(p)
    onehot[np.arange(y.size), y] = 1.0
    return float(np.mean(np.sum((p - onehot) ** 2, axis=1)))


def log_nll(predicted: np.ndarray, outcomes: np.ndarray) -> float:
    p = np.asarray(predicted, dtype=np.float64)
    y = np.asarray(outcomes, dtype=np.int64)
    picked = p[np.arange(y.size), y]
    return -float(np.sum(np.log(np.clip(picked, 1e-300, None))))


class ChoiceModelAdapter(Protocol):
    def predict(self, log: SimLog) -> np.ndarray:
        ...


@dataclass
class TruthChoiceModel:
    """The planted model itself; the oracle comparator."""

    truth: GroundTruth

    def predict(self, log: SimLog) -> np.ndarray:
        data = log.data
        idx = self.truth.segment_index(data.features)
        probs = np.empty((data.num_rows, data.num_options + 1))
        for k, seg in enumerate(self.truth.segments):
            rows = np.flatnonzero(idx == k)
            if rows.size == 0:
                continue
            probs[rows] = _segment_probs(seg.params, data, rows)
        return probs


def _segment_probs(params: MnlParams, data: TrainingSet, rows: np.ndarray) -> np.ndarray:
    prices = data.choices.prices[rows]
    ref = data.choices.reference[rows]
    util = (
        params.trend()[None, :]
        - params.beta_per_option()[None, :] * prices
        - params.gamma_per_option()[None, :] * (prices - ref)
    )
    return mnl_probabilities(
        np.ascontiguousarray(util), np.ascontiguousarray(data.choices.offered[rows])
    )


@dataclass
class NaiveFrequencyModel:
    """Historical per-option conversion frequencies, features ignored."""

    frequencies: tuple[float, ...]

    @classmethod
    def fit(cls, log: SimLog) -> "NaiveFrequencyModel":
        chosen = log.data.choices.chosen
        counts = np.bincount(chosen, minlength=log.data.num_options + 1).astype(np.float64)
        # Jeffreys smoothing keeps holdout NLL finite for unseen options.
        counts += 0.5
        return cls(tuple(counts / counts.sum()))

    def predict(self, log: SimLog) -> np.ndarray:
        return np.tile(np.asarray(self.frequencies), (log.data.num_rows, 1))


@dataclass
class VanillaMnlModel:
    """Single-segment MNL without reference-price effects."""

    params: MnlParams

    @classmethod
    def fit(cls, log: SimLog, bucket_map: BucketMap | None = None,
            config: FitConfig = FitConfig()) -> "VanillaMnlModel":
        choices = log.data.choices
        if bucket_map is None:
            bucket_map = single_bucket_map(choices.num_options)
        # Reference := price zeroes the gap regressor, so gamma stays at 0.
        plain = ChoiceData(choices.prices, choices.prices, choices.offered, choices.chosen)
        return cls(fit_mle(plain, bucket_map, config))

    def predict(self, log: SimLog) -> np.ndarray:
        data = log.data
        prices = data.choices.prices
        util = (
            self.params.trend()[None, :]
            - self.params.beta_per_option()[None, :] * prices
        )
        return mnl_probabilities(
            np.ascontiguousarray(util), np.ascontiguousarray(data.choices.offered)
        )


@dataclass
class SegmentedChoiceModel:
    """The full framework: tree routing plus reference-price MNL leaves."""

    tree: SegmentationTree

    def predict(self, log: SimLog) -> np.ndarray:
        data = log.data
        probs = np.empty((data.num_rows, data.num_options + 1))
        by_leaf: dict[int, list[int]] = {}
        leaf_params: dict[int, MnlParams] = {}
        for q in range(data.num_rows):
            seg_id, params = route(self.tree, data.features.row(q))
            by_leaf.setdefault(seg_id, []).append(q)
            leaf_params[seg_id] = params
        for seg_id, rows in by_leaf.items():
            probs[np.asarray(rows)] = _segment_probs(
                leaf_params[seg_id], data, np.asarray(rows)
            )
        return probs


def evaluate_models(
    holdout: SimLog, models: Mapping[str, ChoiceModelAdapter]
) -> list[MetricsReport]:
    """Holdout NLL and Brier per named model, plus empirical conversion rates."""
    if holdout.data.num_rows == 0:
        raise ValueError("empty holdout log")
    chosen = holdout.data.choices.chosen
    conversion = tuple(
        np.bincount(chosen, minlength=holdout.data.num_options + 1)
        / holdout.data.num_rows
    )
    reports = []
    for name, model in models.items():
        probs = model.predict(holdout)
        reports.append(
            MetricsReport(
                name=name,
                n_rows=holdout.data.num_rows,
                nll=log_nll(probs, chosen),
                brier=brier_score(probs, chosen),
                per_option_conversion=conversion,
            )
        )
    return reports


# ---------------------------------------------------------------------------
# A/B comparison


@dataclass(frozen=True)
class AbReport:
    arm_a: MetricsReport
    arm_b: MetricsReport
    difference: float
    se_difference: float
    t_stat: float
    p_value: float


# ---------------------------------------------------------------------------
# Planted-truth presets (shared by the CLI and the test suite)


def make_preset(name: str) -> GroundTruth:
    """Named ground-truth configurations at a 7-day horizon.

    Money is in whole minor units at a small scale (prices land in the
    6..30 range), so planted price sensitivities around 0.1 per unit give
    realistic conversion rates.
    """
    trend = (0.05, -0.005, 0.1)
    cancellation = CancellationTruth(
        intercept=-2.2, feature_coefs=(("distance", 0.05),), lead_time_coef=0.12
    )
    cost_curve = (10.0, 9.0, 9.0, 8.0, 8.0, 7.0, 6.0)
    distance = NumericFeatureGen("distance", 0.0, 10.0)
    if name == "uniform":
        params = MnlParams(
            alpha=(0.0, 0.0, 0.0),
            beta=(0.10,),
            gamma=(0.0,),
            bucket_map=single_bucket_map(7),
        )
        return GroundTruth(
            num_options=7,
            feature_gens=(distance,),
            segments=(PlantedSegment("all", SegmentRule(), params),),
            cost_curve=cost_curve,
            cancellation=cancellation,
        )
    if name == "ref-effect":
        params = MnlParams(
            alpha=trend,
            beta=(0.10,),
            gamma=(0.05,),
            bucket_map=single_bucket_map(7),
        )
        return GroundTruth(
            num_options=7,
            feature_gens=(distance,),
            segments=(PlantedSegment("all", SegmentRule(), params),),
            cost_curve=cost_curve,
            cancellation=cancellation,
        )
    if name == "two-segment":
        region = CategoricalFeatureGen("region", ("north", "south"))
        bucket_map = single_bucket_map(7)
        low = MnlParams(alpha=trend, beta=(0.05,), gamma=(0.02,), bucket_map=bucket_map)
        high = MnlParams(alpha=trend, beta=(0.20,), gamma=(0.02,), bucket_map=bucket_map)
        return GroundTruth(
            num_options=7,
            feature_gens=(distance, region),
            segments=(
                PlantedSegment("north", SegmentRule((("region", "==", "north"),)), low),
                PlantedSegment("rest", SegmentRule(), high),
            ),
            cost_curve=cost_curve,
            cancellation=cancellation,
        )
    if name == "window":
        params = MnlParams(
            alpha=trend,
            beta=(0.10,),
            gamma=(0.05,),
            bucket_map=single_bucket_map(7),
        )
        window_params = WindowMnlParams(
            alpha=(0.2, 0.2, 0.2, 0.2),
            beta=0.15,
            gamma_vec=(0.0, 0.05),          # (distance, lead_time)
            delta=-0.05,
            feature_names=("distance", "lead_time"),
        )
        return GroundTruth(
            num_options=7,
            feature_gens=(distance,),
            segments=(PlantedSegment("all", SegmentRule(), params),),
            cost_curve=cost_curve,
            cancellation=cancellation,
            window_params=window_params,
            window_cost_offsets=(0.0, 1.0, 2.0, 4.0),
        )
    raise ValueError(
        f"unknown preset {name!r}; choose from uniform, ref-effect, two-segment, window"
    )


PRESET_NAMES = ("uniform", "ref-effect", "two-segment", "window")


def realized_objective_per_quote(
    log: SimLog, config: ObjectiveConfig = ObjectiveConfig()
) -> np.ndarray:
    """Per-quote realized generalized objective: (1-Z) * w_chosen, else 0."""
    data = log.data
    chosen = data.choices.chosen
    out = np.zeros(data.num_rows)
    conv = chosen > 0
    rows = np.flatnonzero(conv)
    p = data.choices.prices[rows, chosen[rows] - 1]
    c = data.costs[rows, chosen[rows] - 1]
    w = (1.0 - config.alpha) * (p - c) + config.alpha * c
    out[rows] = w * (~data.canceled[rows])
    return out


def _arm_report(name: str, log: SimLog, rows: np.ndarray, realized: np.ndarray) -> MetricsReport:
    chosen = log.data.choices.chosen[rows]
    conversion = tuple(
        np.bincount(chosen, minlength=log.data.num_options + 1) / max(rows.size, 1)
    )
    values = realized[rows]
    return MetricsReport(
        name=name,
        n_rows=int(rows.size),
        per_option_conversion=conversion,
        realized_objective=float(values.mean()),
        realized_se=float(values.std(ddof=1) / np.sqrt(values.size)),
    )


def ab_compare(
    truth: GroundTruth,
    policy_a: PricingCallback,
    policy_b: PricingCallback,
    n: int,
    split: float,
    seed: int,
    config: ObjectiveConfig = ObjectiveConfig(),
) -> AbReport:
    """Quote-level randomized comparison of two pricing policies.

    Each quote is independently assigned to arm A with probability
    ``split``; the difference in realized objective is tested with a
    two-sided Welch t-test.
    """
    if not 0.0 < split < 1.0:
        raise ValueError("split must be in (0, 1)")
    # Distinct entropy key so the assignment stream cannot collide with the
    # generation streams spawned from SeedSequence(seed).
    assign_rng = np.random.default_rng(np.random.SeedSequence([seed, 0xAB]))
    arm = (assign_rng.random(n) >= split).astype(np.int64)   # 0 = A, 1 = B
    log = generate_quotes(truth, n, (policy_a, policy_b), seed, arm_of=arm)
    rows_a = np.flatnonzero(arm == 0)
    rows_b = np.flatnonzero(arm == 1)
    if rows_a.size == 0 or rows_b.size == 0:
        raise ValueError("one A/B arm is empty; adjust n or split")
    realized = realized_objective_per_quote(log, config)
    report_a = _arm_report("A", log, rows_a, realized)
    report_b = _arm_report("B", log, rows_b, realized)
    t_stat, p_value = scipy_stats.ttest_ind(
        realized[rows_a], realized[rows_b], equal_var=False
    )
    se = float(np.sqrt(report_a.realized_se**2 + report_b.realized_se**2))
    return AbReport(
        arm_a=report_a,
        arm_b=report_b,
        difference=float(report_a.realized_objective - report_b.realized_objective),
        se_difference=se,
        t_stat=float(t_stat),
        p_value=float(p_value),
    )
