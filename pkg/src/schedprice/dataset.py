"""Columnar training data: quote features, choices, and bookkeeping columns."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .features import FeatureSchema, FeatureTable
from .mnl import ChoiceData


@dataclass
class SecondLevelData:
    """Optional per-quote time-window detail.

    ``clicked`` is the 1-based clicked lead time, 0 when unknown (an
    unconverted quote).  ``window_prices`` holds the full price matrix
    displayed per lead time; ``window_costs`` the matching cost matrix.
    ``chosen_window`` is 0 for no purchase.
    """

    clicked: np.ndarray          # (N,) int64
    chosen_window: np.ndarray    # (N,) int64
    window_prices: np.ndarray    # (N, L, M) float64
    window_costs: np.ndarray     # (N, L, M) float64

    @property
    def num_windows(self) -> int:
        return self.window_prices.shape[2]

    def subset(self, idx: np.ndarray) -> "SecondLevelData":
        return SecondLevelData(
            self.clicked[idx],
            self.chosen_window[idx],
            self.window_prices[idx],
            self.window_costs[idx],
        )


@dataclass
class TrainingSet:
    """Time-stamped rows of (features, choice observation) plus quote metadata."""

    schema: FeatureSchema
    features: FeatureTable
    choices: ChoiceData
    timestamps: np.ndarray                  # (N,) datetime64[s]
    start_days: np.ndarray                  # (N,) int64, DayOfWeek values
    costs: np.ndarray                       # (N, L) logged per-option cost estimates
    canceled: np.ndarray                    # (N,) bool
    quote_ids: Sequence[str]
    second_level: SecondLevelData | None = None
    diagnostics: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        n = self.choices.num_rows
        if len(self.features) != n:
            raise ValueError("feature table and choices disagree on row count")
        for name, arr, shape in (
            ("timestamps", self.timestamps, (n,)),
            ("start_days", self.start_days, (n,)),
            ("costs", self.costs, (n, self.choices.num_options)),
            ("canceled", self.canceled, (n,)),
        ):
            if tuple(arr.shape) != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
        if len(self.quote_ids) != n:
            raise ValueError("quote_ids length mismatch")

    @property
    def num_rows(self) -> int:
        return self.choices.num_rows

    @property
    def num_options(self) -> int:
        return self.choices.num_options

    def subset(self, idx: np.ndarray) -> "TrainingSet":
        return replace(
            self,
            features=self.features.subset(idx),
            choices=self.choices.subset(idx),
            timestamps=self.timestamps[idx],
            start_days=self.start_days[idx],
            costs=self.costs[idx],
            canceled=self.canceled[idx],
            quote_ids=[self.quote_ids[i] for i in np.atleast_1d(idx)],
            second_level=self.second_level.subset(idx) if self.second_level else None,
        )

    def window_filter(self, start: np.datetime64, end: np.datetime64) -> "TrainingSet":
        """Rows with start <= timestamp <= end (the training window)."""
        mask = (self.timestamps >= start) & (self.timestamps <= end)
        return self.subset(np.flatnonzero(mask))


def subsample(data: TrainingSet, fraction: float, seed: int) -> TrainingSet:
    """Uniform subsample without replacement of ceil(fraction * N) rows.

    Deterministic in ``seed``; row order is preserved.  Refitting on
    varied subsamples day over day is the framework's price-exploration
    mechanism, so the seed is recorded by the trainer.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    if data.num_rows == 0:
        raise ValueError("cannot subsample an empty training set")
    k = int(np.ceil(fraction * data.num_rows))
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(data.num_rows, size=k, replace=False))
    return data.subset(idx)
