"""Newline-delimited quote-log schema: ingestion and emission.

One quote per line, one line per quote.  Money is stored as integer minor
units so price-consistency constraints are exact.  Reference prices are
never stored; ingestion recomputes them from the logged offered prices.

Row layout (JSON object per line)::

    {"schema_version": 1, "quote_id": "...", "timestamp": "YYYY-MM-DDTHH:MM:SSZ",
     "features": {...}, "options": [{"index": 1, "day_of_week": "Sun",
     "available": true, "price": 1000, "cost_estimate": 800}, ...],
     "chosen": 0, "canceled": false,
     "second_level": {"clicked_lead_time": 2 | null,
                      "windows": [{"lead_time": 1, "index": 1,
                                   "price": 1000, "cost": 800}, ...],
                      "chosen_window": 0}}

The ``second_level`` block is optional; when present, ``windows`` carries
the full lead-time-by-window price/cost matrix so training can impute
clicks for unconverted quotes.
"""

from __future__ import annotations

import json
import logging
from datetime import datetime, timezone

import numpy as np

from .calendar import DayOfWeek, LeadTimeCalendar, reference_prices_matrix
from .dataset import SecondLevelData, TrainingSet
from .features import FeatureSchema, FeatureTable
from .mnl import ChoiceData

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%SZ"


class IngestError(ValueError):
    pass


class RowError(ValueError):
    pass


def _parse_timestamp(text: str) -> np.datetime64:
    try:
        dt = datetime.strptime(text, TIMESTAMP_FORMAT)
    except (ValueError, TypeError):
        raise RowError(
            f"timestamp {text!r} is not strict UTC 'YYYY-MM-DDTHH:MM:SSZ'"
        ) from None
    return np.datetime64(dt.replace(tzinfo=None), "s")


def _format_timestamp(ts: np.datetime64) -> str:
    return (
        datetime.fromtimestamp(
            int(ts.astype("datetime64[s]").astype(np.int64)), tz=timezone.utc
        ).strftime(TIMESTAMP_FORMAT)
    )


def _money(value, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise RowError(f"{what} must be an integer minor-unit amount, got {value!r}")
    if value < 0:
        raise RowError(f"{what} must be nonnegative, got {value}")
    return value


def parse_row(obj: dict) -> dict:
    """Validate one decoded JSON row; returns a normalized dict."""
    if not isinstance(obj, dict):
        raise RowError("row is not an object")
    version = obj.get("schema_version")
    if version != SCHEMA_VERSION:
        raise RowError(f"schema_version {version!r} != {SCHEMA_VERSION}")
    quote_id = obj.get("quote_id")
    if not isinstance(quote_id, str) or not quote_id:
        raise RowError("missing quote_id")
    ts = _parse_timestamp(obj.get("timestamp"))
    features = obj.get("features")
    if not isinstance(features, dict):
        raise RowError("features must be an object")
    for name, value in features.items():
        if value is not None and not isinstance(value, (int, float, str)):
            raise RowError(f"feature {name!r} has unsupported value {value!r}")
    options = obj.get("options")
    if not isinstance(options, list) or not options:
        raise RowError("options must be a nonempty list")
    L = len(options)
    day_names = []
    available = []
    prices = []
    costs = []
    for k, opt in enumerate(options):
        if not isinstance(opt, dict):
            raise RowError(f"option {k + 1} is not an object")
        if opt.get("index") != k + 1:
            raise RowError(f"option indices must run 1..{L} in order")
        day = opt.get("day_of_week")
        try:
            day_names.append(DayOfWeek.from_name(day))
        except ValueError as exc:
            raise RowError(str(exc)) from None
        available.append(bool(opt.get("available", True)))
        prices.append(_money(opt.get("price"), f"option {k + 1} price"))
        costs.append(_money(opt.get("cost_estimate"), f"option {k + 1} cost_estimate"))
    start = day_names[0]
    for k, day in enumerate(day_names):
        if int(day) != (int(start) + k) % 7:
            raise RowError(
                "option day_of_week values are not consecutive calendar days"
            )
    if not any(available):
        raise RowError("no option is available")
    chosen = obj.get("chosen")
    if not isinstance(chosen, int) or isinstance(chosen, bool) or not 0 <= chosen <= L:
        raise RowError(f"chosen={chosen!r} out of range 0..{L}")
    if chosen > 0 and not available[chosen - 1]:
        raise RowError(f"chosen option {chosen} is not available")
    canceled = obj.get("canceled")
    if not isinstance(canceled, bool):
        raise RowError("canceled must be a boolean")
    if canceled and chosen == 0:
        raise RowError("canceled=true requires a conversion")

    second = obj.get("second_level")
    parsed_second = None
    if second is not None:
        if not isinstance(second, dict):
            raise RowError("second_level must be an object")
        clicked = second.get("clicked_lead_time")
        if clicked is not None and (
            not isinstance(clicked, int) or not 1 <= clicked <= L
        ):
            raise RowError(f"clicked_lead_time={clicked!r} out of range")
        chosen_window = second.get("chosen_window")
        windows = second.get("windows")
        if not isinstance(windows, list) or not windows:
            raise RowError("second_level.windows must be a nonempty list")
        if len(windows) % L != 0:
            raise RowError("second_level.windows must cover all lead times")
        M = len(windows) // L
        wprices = np.zeros((L, M))
        wcosts = np.zeros((L, M))
        seen = set()
        for entry in windows:
            lt = entry.get("lead_time")
            j = entry.get("index")
            if not (isinstance(lt, int) and 1 <= lt <= L):
                raise RowError("window entry lead_time out of range")
            if not (isinstance(j, int) and 1 <= j <= M):
                raise RowError("window entry index out of range")
            if (lt, j) in seen:
                raise RowError(f"duplicate window entry ({lt}, {j})")
            seen.add((lt, j))
            wprices[lt - 1, j - 1] = _money(entry.get("price"), "window price")
            wcosts[lt - 1, j - 1] = _money(entry.get("cost"), "window cost")
        if len(seen) != L * M:
            raise RowError("second_level.windows is missing entries")
        if not isinstance(chosen_window, int) or not 0 <= chosen_window <= M:
            raise RowError(f"chosen_window={chosen_window!r} out of range 0..{M}")
        if (chosen_window > 0) != (chosen > 0):
            raise RowError("chosen_window and chosen must convert together")
        if chosen > 0 and clicked != chosen:
            raise RowError("clicked_lead_time must equal chosen for conversions")
        parsed_second = {
            "clicked": 0 if clicked is None else clicked,
            "chosen_window": chosen_window,
            "window_prices": wprices,
            "window_costs": wcosts,
        }

    return {
        "quote_id": quote_id,
        "timestamp": ts,
        "features": features,
        "start_day": int(start),
        "available": available,
        "prices": prices,
        "costs": costs,
        "chosen": chosen,
        "canceled": canceled,
        "second_level": parsed_second,
    }


def ingest(
    path,
    schema: FeatureSchema | None = None,
    max_malformed_fraction: float = 0.01,
) -> TrainingSet:
    """Parse and validate a quote log into a training set.

    Malformed rows are rejected with line-numbered diagnostics (kept on
    ``TrainingSet.diagnostics``); more than ``max_malformed_fraction`` of
    bad rows aborts.  Reference prices are recomputed from the logged
    prices, never read from the file.
    """
    rows: list[dict] = []
    diagnostics: list[str] = []
    total = 0
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            total += 1
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                diagnostics.append(f"line {line_no}: invalid JSON ({exc.msg})")
                continue
            try:
                rows.append(parse_row(obj))
            except RowError as exc:
                diagnostics.append(f"line {line_no}: {exc}")
    if total == 0:
        raise IngestError(f"{path}: empty quote log")
    for msg in diagnostics:
        logger.warning("%s: %s", path, msg)
    if len(diagnostics) > max_malformed_fraction * total:
        raise IngestError(
            f"{path}: {len(diagnostics)} of {total} rows malformed "
            f"(> {max_malformed_fraction:.0%}); first: {diagnostics[0]}"
        )
    if not rows:
        raise IngestError(f"{path}: no valid rows")

    L = len(rows[0]["prices"])
    for row in rows:
        if len(row["prices"]) != L:
            raise IngestError(f"{path}: inconsistent option counts across rows")
    if schema is None:
        schema = FeatureSchema.infer(r["features"] for r in rows)
    features = FeatureTable.from_rows([r["features"] for r in rows], schema)
    prices = np.array([r["prices"] for r in rows], dtype=np.float64)
    offered = np.array([r["available"] for r in rows], dtype=bool)
    chosen = np.array([r["chosen"] for r in rows], dtype=np.int64)
    costs = np.array([r["costs"] for r in rows], dtype=np.float64)
    start_days = np.array([r["start_day"] for r in rows], dtype=np.int64)
    timestamps = np.array([r["timestamp"] for r in rows], dtype="datetime64[s]")
    canceled = np.array([r["canceled"] for r in rows], dtype=bool)

    reference = np.empty_like(prices)
    groups: dict[tuple, list[int]] = {}
    for q, row in enumerate(rows):
        groups.setdefault((row["start_day"], tuple(row["available"])), []).append(q)
    for (start_day, avail), idx_list in groups.items():
        cal = LeadTimeCalendar(L, DayOfWeek(start_day), avail)
        idx = np.asarray(idx_list)
        reference[idx] = reference_prices_matrix(prices[idx], cal)

    second_level = None
    have_second = [r["second_level"] is not None for r in rows]
    if any(have_second):
        if not all(have_second):
            raise IngestError(f"{path}: second_level present on only some rows")
        M = rows[0]["second_level"]["window_prices"].shape[1]
        second_level = SecondLevelData(
            clicked=np.array([r["second_level"]["clicked"] for r in rows], dtype=np.int64),
            chosen_window=np.array(
                [r["second_level"]["chosen_window"] for r in rows], dtype=np.int64
            ),
            window_prices=np.stack([r["second_level"]["window_prices"] for r in rows]),
            window_costs=np.stack([r["second_level"]["window_costs"] for r in rows]),
        )

    return TrainingSet(
        schema=schema,
        features=features,
        choices=ChoiceData(prices, reference, offered, chosen),
        timestamps=timestamps,
        start_days=start_days,
        costs=costs,
        canceled=canceled,
        quote_ids=[r["quote_id"] for r in rows],
        second_level=second_level,
        diagnostics=tuple(diagnostics),
    )


def training_set_rows(data: TrainingSet):
    """Yield canonical JSON-ready row dicts for a training set."""
    for q in range(data.num_rows):
        start = int(data.start_days[q])
        chosen = int(data.choices.chosen[q])
        row = {
            "schema_version": SCHEMA_VERSION,
            "quote_id": str(data.quote_ids[q]),
            "timestamp": _format_timestamp(data.timestamps[q]),
            "features": data.features.row(q),
            "options": [
                {
                    "index": k + 1,
                    "day_of_week": DayOfWeek((start + k) % 7).short_name,
                    "available": bool(data.choices.offered[q, k]),
                    "price": int(round(data.choices.prices[q, k])),
                    "cost_estimate": int(round(data.costs[q, k])),
                }
                for k in range(data.num_options)
            ],
            "chosen": chosen,
            "canceled": bool(data.canceled[q]),
        }
        if data.second_level is not None:
            sl = data.second_level
            M = sl.num_windows
            clicked = int(sl.clicked[q])
            row["second_level"] = {
                "clicked_lead_time": clicked if clicked > 0 else None,
                "windows": [
                    {
                        "lead_time": i + 1,
                        "index": j + 1,
                        "price": int(round(sl.window_prices[q, i, j])),
                        "cost": int(round(sl.window_costs[q, i, j])),
                    }
                    for i in range(data.num_options)
                    for j in range(M)
                ],
                "chosen_window": int(sl.chosen_window[q]),
            }
        yield row


def write_training_set(data: TrainingSet, path) -> None:
    """Emit the newline-delimited quote log (canonical key order)."""
    with open(path, "w") as fh:
        for row in training_set_rows(data):
            fh.write(json.dumps(row, sort_keys=True))
            fh.write("\n")
