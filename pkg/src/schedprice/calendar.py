"""Lead-time calendars: day-of-week mapping and local reference prices.

A lead-time calendar describes the L dated options shown on one quote:
which day of the week each option falls on and which options are actually
offered.  Reference prices are derived purely from a displayed price
vector and the calendar; they never look at historical quotes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np

from .kernels import reference_prices_batch

_DAY_NAMES = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")


class DayOfWeek(IntEnum):
    MONDAY = 0
    TUESDAY = 1
    WEDNESDAY = 2
    THURSDAY = 3
    FRIDAY = 4
    SATURDAY = 5
    SUNDAY = 6

    @property
    def short_name(self) -> str:
        return _DAY_NAMES[self.value]

    @classmethod
    def from_name(cls, name: str) -> "DayOfWeek":
        try:
            return cls(_DAY_NAMES.index(name))
        except ValueError:
            raise ValueError(f"unknown day-of-week name {name!r}") from None


class DayClass(Enum):
    WEEKDAY = "weekday"
    WEEKEND = "weekend"


@dataclass(frozen=True)
class LeadTimeCalendar:
    """The dated option layout of one quote.

    Option indices are 1-based; option i falls ``i - 1`` days after
    ``start_day_of_week``.  ``availability`` marks which options are
    offered (all of them by default).
    """

    num_options: int
    start_day_of_week: DayOfWeek
    availability: tuple[bool, ...] = field(default=())

    def __post_init__(self) -> None:
        if self.num_options < 1:
            raise ValueError("calendar needs at least one option")
        avail = self.availability
        if not avail:
            avail = (True,) * self.num_options
        else:
            avail = tuple(bool(a) for a in avail)
        if len(avail) != self.num_options:
            raise ValueError(
                f"availability has {len(avail)} entries for {self.num_options} options"
            )
        if not any(avail):
            raise ValueError("at least one option must be available")
        object.__setattr__(self, "availability", avail)
        object.__setattr__(
            self, "start_day_of_week", DayOfWeek(self.start_day_of_week)
        )

    def day_of_week(self, i: int) -> DayOfWeek:
        """Day of week of option ``i`` (1-based)."""
        self._check_index(i)
        return DayOfWeek((int(self.start_day_of_week) + i - 1) % 7)

    def _check_index(self, i: int) -> None:
        if not 1 <= i <= self.num_options:
            raise IndexError(
                f"option index {i} out of range 1..{self.num_options}"
            )

    @property
    def offered_mask(self) -> np.ndarray:
        return np.asarray(self.availability, dtype=bool)

    def weekday_order(self) -> np.ndarray:
        """0-based positions of available weekday options, calendar order."""
        return np.array(
            [
                i - 1
                for i in range(1, self.num_options + 1)
                if self.availability[i - 1]
                and day_class(self, i) is DayClass.WEEKDAY
            ],
            dtype=np.int64,
        )

    def weekend_indices(self) -> np.ndarray:
        """0-based positions of available weekend options."""
        return np.array(
            [
                i - 1
                for i in range(1, self.num_options + 1)
                if self.availability[i - 1]
                and day_class(self, i) is DayClass.WEEKEND
            ],
            dtype=np.int64,
        )


def day_class(calendar: LeadTimeCalendar, i: int) -> DayClass:
    """Weekday/weekend class of option ``i`` (Saturday and Sunday are weekend)."""
    dow = calendar.day_of_week(i)
    if dow in (DayOfWeek.SATURDAY, DayOfWeek.SUNDAY):
        return DayClass.WEEKEND
    return DayClass.WEEKDAY


def reference_prices(prices, calendar: LeadTimeCalendar) -> np.ndarray:
    """Local reference price vector for one displayed price vector.

    Weekday option: minimum price over the window of up to 3 consecutive
    available weekday options centered on it (2 at the first/last weekday
    of the horizon; weekends do not interrupt weekday adjacency).  Weekend
    option: minimum over all available weekend options.  Unavailable
    options are excluded from every window and fall back to their own
    price, as does a weekday with no available neighbors.
    """
    p = np.asarray(prices, dtype=np.float64)
    if p.ndim != 1 or p.shape[0] != calendar.num_options:
        raise ValueError(
            f"expected {calendar.num_options} prices, got shape {p.shape}"
        )
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValueError("prices must be finite and nonnegative")
    return reference_prices_matrix(p[None, :], calendar)[0]


def reference_prices_matrix(prices: np.ndarray, calendar: LeadTimeCalendar) -> np.ndarray:
    """Batch form of :func:`reference_prices` over rows of a (G, L) array."""
    p = np.ascontiguousarray(prices, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != calendar.num_options:
        raise ValueError(f"expected (G, {calendar.num_options}) prices, got {p.shape}")
    return reference_prices_batch(
        p, calendar.weekday_order(), calendar.weekend_indices()
    )
