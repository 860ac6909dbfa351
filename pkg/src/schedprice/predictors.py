"""Auxiliary predictors the pricing objective needs: per-option expected
costs and post-booking cancellation probability.

Both are swappable interfaces with reference implementations: a keyed
lookup table for costs and an L2-regularized logistic model for
cancellation.  Cancellation depends on the quote features and the chosen
option only, never on the offered prices.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

import numpy as np
from scipy.optimize import minimize

from .calendar import LeadTimeCalendar
from .features import FeatureSchema, FeatureTable

logger = logging.getLogger(__name__)

CANCEL_RATE_CLIP = (1e-4, 1.0 - 1e-4)
CANCEL_L2 = 1e-4


class CostModel(Protocol):
    def expected_costs(self, x: Mapping[str, object], calendar: LeadTimeCalendar) -> np.ndarray:
        ...


@dataclass(frozen=True)
class TableCostModel:
    """Per-option cost curves keyed on a subset of the quote features.

    With no key features the table is a single base curve.  Unknown keys
    fall back to the default curve with a warning.
    """

    key_features: tuple[str, ...]
    table: Mapping[tuple, tuple[float, ...]]
    default: tuple[float, ...]

    def expected_costs(self, x: Mapping[str, object], calendar: LeadTimeCalendar) -> np.ndarray:
        curve = self.default
        if self.key_features:
            key = tuple(x.get(name) for name in self.key_features)
            hit = self.table.get(key)
            if hit is None:
                logger.warning("no cost row for key %r; using default curve", key)
            else:
                curve = hit
        costs = np.asarray(curve, dtype=np.float64)
        if costs.shape != (calendar.num_options,):
            raise ValueError(
                f"cost curve has {costs.shape[0]} entries for "
                f"{calendar.num_options} options"
            )
        return costs

    @classmethod
    def from_csv(cls, path, num_options: int) -> "TableCostModel":
        """Load 'key columns..., cost_1..cost_L' rows; first row is default
        when it has empty keys, otherwise the first data row doubles as the
        default curve."""
        cost_cols = [f"cost_{i}" for i in range(1, num_options + 1)]
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise ValueError(f"{path}: empty cost table")
            missing = [c for c in cost_cols if c not in reader.fieldnames]
            if missing:
                raise ValueError(f"{path}: missing cost columns {missing}")
            key_features = tuple(c for c in reader.fieldnames if c not in cost_cols)
            table: dict[tuple, tuple[float, ...]] = {}
            default: tuple[float, ...] | None = None
            for row in reader:
                curve = tuple(float(row[c]) for c in cost_cols)
                key = tuple(
                    None if row[k] == "" else _parse_key(row[k]) for k in key_features
                )
                if all(k is None for k in key):
                    default = curve
                else:
                    table[key] = curve
                if default is None:
                    default = curve
        if default is None:
            raise ValueError(f"{path}: no cost rows")
        return cls(key_features=key_features, table=table, default=default)

    def to_csv(self, path) -> None:
        cost_cols = [f"cost_{i}" for i in range(1, len(self.default) + 1)]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(self.key_features) + cost_cols)
            writer.writerow([""] * len(self.key_features) + list(self.default))
            for key, curve in sorted(self.table.items(), key=lambda kv: repr(kv[0])):
                writer.writerow(list(key) + list(curve))


def _parse_key(text: str):
    try:
        return float(text)
    except ValueError:
        return text


def expected_costs(
    model: CostModel, x: Mapping[str, object], calendar: LeadTimeCalendar
) -> np.ndarray:
    return model.expected_costs(x, calendar)


@dataclass(frozen=True)
class ConstantCancellation:
    """Degenerate single-class fit: one clipped constant rate."""

    rate: float

    def cancel_probability(self, x_encoded: np.ndarray, i: int) -> float:
        return self.rate


@dataclass(frozen=True)
class LogisticCancellation:
    """Logistic cancellation rate over encoded features + chosen-option one-hot."""

    intercept: float
    feature_coefs: tuple[float, ...]
    option_coefs: tuple[float, ...]
    feature_names: tuple[str, ...]

    def cancel_probability(self, x_encoded: np.ndarray, i: int) -> float:
        if x_encoded.shape != (len(self.feature_coefs),):
            raise ValueError("encoded feature vector has wrong length")
        z = self.intercept + float(np.dot(self.feature_coefs, x_encoded))
        if not 1 <= i <= len(self.option_coefs):
            raise ValueError(f"option index {i} out of range")
        z += self.option_coefs[i - 1]
        return float(1.0 / (1.0 + np.exp(-z)))


CancellationModel = ConstantCancellation | LogisticCancellation


def fit_cancellation(
    features: FeatureTable,
    chosen: np.ndarray,
    canceled: np.ndarray,
    num_options: int,
    l2: float = CANCEL_L2,
) -> CancellationModel:
    """Regularized logistic MLE on booked rows.

    Only converted rows carry a cancellation label.  The intercept is not
    penalized, so an intercept-only fit reproduces the empirical rate.
    Single-class data degrades to a clipped constant model.
    """
    booked = np.flatnonzero(chosen > 0)
    if booked.size == 0:
        raise ValueError("no booked rows to fit cancellation on")
    y = np.asarray(canceled, dtype=np.float64)[booked]
    rate = float(y.mean())
    if rate in (0.0, 1.0):
        return ConstantCancellation(
            rate=float(np.clip(rate, *CANCEL_RATE_CLIP))
        )
    x_mat, names = features.subset(booked).design_matrix()
    onehot = np.zeros((booked.size, num_options))
    onehot[np.arange(booked.size), chosen[booked] - 1] = 1.0
    design = np.column_stack([np.ones(booked.size), x_mat, onehot])

    def objective(theta: np.ndarray):
        z = design @ theta
        # log(1 + e^z) - y z, computed stably
        nll = float(np.sum(np.logaddexp(0.0, z) - y * z))
        p = 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))
        grad = design.T @ (p - y)
        nll += 0.5 * l2 * float(np.sum(theta[1:] ** 2))
        grad[1:] += l2 * theta[1:]
        return nll, grad

    theta0 = np.zeros(design.shape[1])
    result = minimize(objective, theta0, jac=True, method="L-BFGS-B",
                      options={"maxiter": 500, "gtol": 1e-8, "ftol": 1e-14})
    theta = result.x
    n_feat = x_mat.shape[1]
    return LogisticCancellation(
        intercept=float(theta[0]),
        feature_coefs=tuple(theta[1 : 1 + n_feat]),
        option_coefs=tuple(theta[1 + n_feat :]),
        feature_names=names,
    )


def cancel_probability(model: CancellationModel, x_encoded: np.ndarray, i: int) -> float:
    """P(Z=1 | x, chose option i); price never enters."""
    return model.cancel_probability(np.asarray(x_encoded, dtype=np.float64), i)


def keep_probability_vector(
    model: CancellationModel | None, x_encoded: np.ndarray, num_options: int
) -> np.ndarray:
    """P(Z=0 | x, i) for every option i; ones when no model is supplied."""
    if model is None:
        return np.ones(num_options)
    return np.array(
        [1.0 - cancel_probability(model, x_encoded, i) for i in range(1, num_options + 1)]
    )


@dataclass(frozen=True)
class SegmentedCancellation:
    """Per-segment cancellation models with a global fallback."""

    by_segment: Mapping[int, CancellationModel]
    global_model: CancellationModel

    def for_segment(self, segment_id: int) -> CancellationModel:
        return self.by_segment.get(segment_id, self.global_model)


def encode_features_for_cancellation(
    schema: FeatureSchema, x: Mapping[str, object]
) -> np.ndarray:
    """Single-row version of FeatureTable.design_matrix for serving."""
    table = FeatureTable.from_rows([dict(x)], schema)
    mat, _ = table.design_matrix()
    return mat[0]
