"""Operational shell: training orchestration, quote serving, and the HTTP
endpoint with atomic artifact hot-reload.

Training is a pure function of (data, settings): the window end, the
subsample seed, and the derived trained-at instant all come from the
inputs, never from the wall clock.  Serving is read-only; a replaced
artifact file is picked up atomically and in-flight requests finish on
the model they started with.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Mapping

import numpy as np

from .artifact import ModelArtifact
from .calendar import DayOfWeek, LeadTimeCalendar
from .dataset import TrainingSet, subsample
from .features import NUMERIC
from .mnl import BucketMap, default_bucket_map, single_bucket_map
from .predictors import (
    CostModel,
    SegmentedCancellation,
    fit_cancellation,
)
from .pricing import (
    GridConfig,
    Guardrails,
    ObjectiveConfig,
    PricingPolicy,
    optimize_two_param,
)
from .quotelog import _format_timestamp
from .tree import SegmentationTree, TreeConfig, fit_tree, route
from .windows import (
    STANDARD_WINDOW_COUNTS,
    SecondLevelObservation,
    UnconvertedQuote,
    WindowCatalog,
    WindowMnlParams,
    fit_window_model,
    impute_clicks,
    price_windows,
    window_features,
)

logger = logging.getLogger(__name__)

SECONDS_PER_WEEK = 7 * 24 * 3600


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class TrainSettings:
    guardrails: Guardrails
    window_weeks: float = 8.0
    subsample_fraction: float = 0.5
    seed: int = 0
    tree: TreeConfig = field(default_factory=TreeConfig)
    objective_alpha: float = 0.0
    bucket_scheme: str = "default"          # "default" (calendar) or "single"
    second_level: bool = False
    serving_grid: GridConfig = field(default_factory=GridConfig)


def _bucket_map_for(data: TrainingSet, scheme: str) -> BucketMap:
    if scheme == "single":
        return single_bucket_map(data.num_options)
    if scheme != "default":
        raise ValueError(f"unknown bucket scheme {scheme!r}")
    # Calendar bucketing needs one layout; use the most common start day.
    days, counts = np.unique(data.start_days, return_counts=True)
    start = DayOfWeek(int(days[np.argmax(counts)]))
    return default_bucket_map(LeadTimeCalendar(data.num_options, start))


def train(data: TrainingSet, settings: TrainSettings) -> ModelArtifact:
    """Window-filter, subsample, fit the tree (+ cancellation, + optional
    second level), and assemble the artifact."""
    if data.num_rows == 0:
        raise InsufficientDataError("no ingested rows")
    end = data.timestamps.max()
    start = end - np.timedelta64(int(settings.window_weeks * SECONDS_PER_WEEK), "s")
    windowed = data.window_filter(start, end)
    if windowed.num_rows < settings.tree.min_leaf_samples:
        raise InsufficientDataError(
            f"{windowed.num_rows} rows in the training window; need at least "
            f"{settings.tree.min_leaf_samples}"
        )
    sampled = subsample(windowed, settings.subsample_fraction, settings.seed)
    if sampled.num_rows < settings.tree.min_leaf_samples:
        raise InsufficientDataError("subsample is smaller than min_leaf_samples")

    bucket_map = _bucket_map_for(sampled, settings.bucket_scheme)
    tree = fit_tree(sampled, settings.tree, bucket_map)
    tree.metadata = {
        "window_start": _format_timestamp(start),
        "window_end": _format_timestamp(end),
        "subsample_fraction": float(settings.subsample_fraction),
        "subsample_seed": int(settings.seed),
        "training_rows": int(sampled.num_rows),
    }

    cancellation = _fit_segmented_cancellation(sampled, tree, settings)
    window_model = None
    window_catalog = None
    if settings.second_level:
        if sampled.second_level is None:
            raise InsufficientDataError(
                "second-level training requested but the log has no window data"
            )
        window_model, window_catalog = _fit_second_level(sampled, tree, settings)

    return ModelArtifact(
        tree=tree,
        cancellation=cancellation,
        guardrails=settings.guardrails,
        objective_alpha=settings.objective_alpha,
        trained_at=_format_timestamp(end),
        window_start=_format_timestamp(start),
        window_end=_format_timestamp(end),
        window_weeks=settings.window_weeks,
        subsample_fraction=settings.subsample_fraction,
        subsample_seed=settings.seed,
        serving_grid=settings.serving_grid,
        window_model=window_model,
        window_catalog=window_catalog,
    )


def _route_all(tree: SegmentationTree, data: TrainingSet) -> np.ndarray:
    return np.array(
        [route(tree, data.features.row(q))[0] for q in range(data.num_rows)],
        dtype=np.int64,
    )


def _fit_segmented_cancellation(
    data: TrainingSet, tree: SegmentationTree, settings: TrainSettings
) -> SegmentedCancellation:
    chosen = data.choices.chosen
    global_model = fit_cancellation(
        data.features, chosen, data.canceled, data.num_options
    )
    seg_ids = _route_all(tree, data)
    by_segment = {}
    for seg in np.unique(seg_ids):
        rows = np.flatnonzero(seg_ids == seg)
        booked = rows[chosen[rows] > 0]
        if rows.size < settings.tree.min_leaf_samples or booked.size == 0:
            continue
        by_segment[int(seg)] = fit_cancellation(
            data.features.subset(rows),
            chosen[rows],
            data.canceled[rows],
            data.num_options,
        )
    return SegmentedCancellation(by_segment=by_segment, global_model=global_model)


def _numeric_feature_vector(data: TrainingSet, q: int) -> tuple[float, ...]:
    values = []
    for spec in data.schema.features:
        if spec.kind == NUMERIC:
            v = data.features.numeric[spec.name][q]
            values.append(0.0 if np.isnan(v) else float(v))
    return tuple(values)


def _fit_second_level(
    data: TrainingSet, tree: SegmentationTree, settings: TrainSettings
) -> tuple[WindowMnlParams, WindowCatalog | None]:
    sl = data.second_level
    rows: list[SecondLevelObservation] = []
    unconverted: list[UnconvertedQuote] = []
    from .kernels import mnl_probabilities

    for q in range(data.num_rows):
        base = _numeric_feature_vector(data, q)
        if sl.clicked[q] > 0:
            i = int(sl.clicked[q])
            rows.append(
                SecondLevelObservation(
                    features=window_features(base, i),
                    window_prices=tuple(sl.window_prices[q, i - 1]),
                    chosen_window=int(sl.chosen_window[q]),
                )
            )
        else:
            _, params = route(tree, data.features.row(q))
            prices = data.choices.prices[q][None, :]
            ref = data.choices.reference[q][None, :]
            util = (
                params.trend()[None, :]
                - params.beta_per_option()[None, :] * prices
                - params.gamma_per_option()[None, :] * (prices - ref)
            )
            probs = mnl_probabilities(
                np.ascontiguousarray(util),
                np.ascontiguousarray(data.choices.offered[q][None, :]),
            )[0]
            unconverted.append(
                UnconvertedQuote(
                    features_base=base,
                    base_probs=probs,
                    window_prices=sl.window_prices[q],
                )
            )
    imputed, dropped = impute_clicks(unconverted, seed=settings.seed)
    if dropped:
        logger.warning("second level: dropped %d zero-purchase-mass rows", dropped)
    rows.extend(imputed)
    numeric_names = tuple(
        f.name for f in data.schema.features if f.kind == NUMERIC
    )
    model = fit_window_model(rows, feature_names=numeric_names + ("lead_time",))
    M = sl.num_windows
    catalog = (
        WindowCatalog.standard(M) if M in STANDARD_WINDOW_COUNTS else None
    )
    return model, catalog


# ---------------------------------------------------------------------------
# Quote serving


@dataclass
class QuoteRequest:
    features: Mapping[str, object]
    calendar: LeadTimeCalendar
    cost_estimates: np.ndarray | None = None
    second_level: bool = False
    window_costs: np.ndarray | None = None   # (L, M) minor units

    @classmethod
    def from_dict(cls, doc: Mapping) -> "QuoteRequest":
        if not isinstance(doc, Mapping):
            raise ValueError("request must be a JSON object")
        cal_doc = doc.get("calendar")
        if not isinstance(cal_doc, Mapping):
            raise ValueError("request needs a calendar object")
        start = cal_doc.get("start_day_of_week")
        day = DayOfWeek.from_name(start) if isinstance(start, str) else DayOfWeek(int(start))
        calendar = LeadTimeCalendar(
            num_options=int(cal_doc.get("num_options", 0)),
            start_day_of_week=day,
            availability=tuple(cal_doc.get("availability", ())),
        )
        features = doc.get("features", {})
        if not isinstance(features, Mapping):
            raise ValueError("features must be an object")
        costs = doc.get("cost_estimates")
        window_costs = doc.get("window_costs")
        return cls(
            features=dict(features),
            calendar=calendar,
            cost_estimates=None if costs is None else np.asarray(costs, dtype=np.float64),
            second_level=bool(doc.get("second_level", False)),
            window_costs=None
            if window_costs is None
            else np.asarray(window_costs, dtype=np.float64),
        )


@dataclass
class QuoteResult:
    prices: np.ndarray                  # (L,) integer minor units
    policy: PricingPolicy
    segment_id: int
    objective: float
    model_version: str
    window_prices: np.ndarray | None = None   # (L, M) integer minor units

    def to_dict(self) -> dict:
        doc = {
            "prices": [int(p) for p in self.prices],
            "m1": self.policy.m1,
            "m2": self.policy.m2,
            "segment_id": self.segment_id,
            "objective": self.objective,
            "model_version": self.model_version,
            "window_prices": None
            if self.window_prices is None
            else [[int(p) for p in row] for row in self.window_prices],
        }
        return doc


def quote(
    artifact: ModelArtifact,
    request: QuoteRequest,
    cost_model: CostModel | None = None,
) -> QuoteResult:
    """Route, predict costs, optimize the two-parameter policy, and (when
    asked) price every time window under the min-window consistency
    constraint.  Prices come back in whole minor units."""
    calendar = request.calendar
    if calendar.num_options != artifact.num_options:
        raise ValueError(
            f"request has {calendar.num_options} options; the artifact was "
            f"trained for {artifact.num_options}"
        )
    segment_id, params = route(artifact.tree, request.features)
    if request.cost_estimates is not None:
        costs = np.asarray(request.cost_estimates, dtype=np.float64)
        if costs.shape != (calendar.num_options,):
            raise ValueError("cost_estimates has the wrong length")
    elif cost_model is not None:
        costs = cost_model.expected_costs(request.features, calendar)
    else:
        raise ValueError("request carries no cost estimates and no cost model is loaded")

    cancel = artifact.cancellation.for_segment(segment_id)
    config = ObjectiveConfig(alpha=artifact.objective_alpha, include_cancellation=True)
    policy, prices, objective = optimize_two_param(
        request.features,
        params,
        costs,
        cancel,
        calendar,
        artifact.guardrails,
        config,
        artifact.serving_grid,
    )
    int_prices = np.rint(prices).astype(np.int64)

    window_prices = None
    if request.second_level:
        if artifact.window_model is None:
            raise ValueError("artifact has no second-level window model")
        if request.window_costs is None:
            raise ValueError("second-level quoting needs window_costs")
        wm: WindowMnlParams = artifact.window_model
        wc = np.asarray(request.window_costs, dtype=np.float64)
        if wc.shape != (calendar.num_options, wm.num_windows):
            raise ValueError(
                f"window_costs must be ({calendar.num_options}, {wm.num_windows})"
            )
        base = _request_numeric_features(wm, request.features)
        _, ceiling = artifact.guardrails.arrays()
        window_prices = np.empty((calendar.num_options, wm.num_windows), dtype=np.int64)
        for i in range(1, calendar.num_options + 1):
            p1 = float(int_prices[i - 1])
            x_i = window_features(base, i)
            w = price_windows(i, p1, wc[i - 1], wm, x_i, float(ceiling[i - 1]))
            rounded = np.rint(w).astype(np.int64)
            rounded = np.maximum(rounded, int_prices[i - 1])
            rounded[wc[i - 1] == wc[i - 1].min()] = int_prices[i - 1]
            window_prices[i - 1] = rounded

    return QuoteResult(
        prices=int_prices,
        policy=policy,
        segment_id=segment_id,
        objective=float(objective),
        model_version=artifact.version,
        window_prices=window_prices,
    )


def _request_numeric_features(
    wm: WindowMnlParams, features: Mapping[str, object]
) -> tuple[float, ...]:
    names = wm.feature_names[:-1] if wm.feature_names else ()
    values = []
    for name in names:
        v = features.get(name)
        values.append(0.0 if v is None else float(v))
    return tuple(values)


# ---------------------------------------------------------------------------
# HTTP endpoint


class ServingState:
    """Artifact holder with lock-free reads and atomic hot reload.

    Each request grabs one reference; the watcher swaps the attribute only
    after a replacement file parses cleanly, so a broken upload never
    takes down serving.
    """

    def __init__(self, artifact_path: str, cost_model: CostModel | None = None):
        self.path = artifact_path
        self.cost_model = cost_model
        self._reload_lock = threading.Lock()
        self._stat_key = self._stat(artifact_path)
        self.artifact = ModelArtifact.load(artifact_path)

    @staticmethod
    def _stat(path) -> tuple:
        st = os.stat(path)
        return (st.st_mtime_ns, st.st_size, st.st_ino)

    def current(self) -> ModelArtifact:
        try:
            key = self._stat(self.path)
        except OSError:
            return self.artifact
        if key != self._stat_key and self._reload_lock.acquire(blocking=False):
            try:
                if key != self._stat_key:
                    artifact = ModelArtifact.load(self.path)
                    self.artifact = artifact
                    self._stat_key = key
                    logger.info("hot-reloaded artifact version %s", artifact.version)
            except Exception:
                logger.exception("artifact reload failed; keeping current model")
            finally:
                self._reload_lock.release()
        return self.artifact


class QuoteHTTPHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def _send(self, status: int, doc: dict) -> None:
        body = json.dumps(doc).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self) -> None:   # noqa: N802 (http.server API)
        if self.path != "/healthz":
            self._send(404, {"error": f"unknown path {self.path}"})
            return
        artifact = self.server.state.current()
        self._send(200, {"status": "ok", "model_version": artifact.version})

    def do_POST(self) -> None:  # noqa: N802
        if self.path != "/quote":
            self._send(404, {"error": f"unknown path {self.path}"})
            return
        artifact = self.server.state.current()
        try:
            length = int(self.headers.get("Content-Length", 0))
            raw = self.rfile.read(length)
            request = QuoteRequest.from_dict(json.loads(raw))
            result = quote(artifact, request, self.server.state.cost_model)
        except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
            self._send(400, {"error": str(exc)})
            return
        except Exception as exc:     # never crash the process
            logger.exception("quote request failed")
            self._send(500, {"error": f"internal error: {exc}"})
            return
        self._send(200, result.to_dict())

    def log_message(self, fmt: str, *args) -> None:
        logger.debug("http: " + fmt, *args)


class QuoteServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, state: ServingState):
        super().__init__(address, QuoteHTTPHandler)
        self.state = state


def make_server(
    artifact_path: str,
    host: str = "127.0.0.1",
    port: int = 8080,
    cost_model: CostModel | None = None,
) -> QuoteServer:
    state = ServingState(artifact_path, cost_model)
    return QuoteServer((host, port), state)


def serve(
    artifact_path: str,
    host: str = "127.0.0.1",
    port: int = 8080,
    cost_model: CostModel | None = None,
) -> None:
    server = make_server(artifact_path, host, port, cost_model)
    logger.info(
        "serving %s on %s:%d (version %s)",
        artifact_path,
        host,
        server.server_address[1],
        server.state.artifact.version,
    )
    try:
        server.serve_forever()
    finally:
        server.server_close()
