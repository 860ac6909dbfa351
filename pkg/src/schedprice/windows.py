"""Second-level time-window choice model and constrained window pricing.

Given the lead time a customer clicked, an auxiliary MNL over the M time
windows decides which window (or nothing) is booked:

    V_j = alpha_j - beta * p_j + gamma . x + delta * j

with j ordered by window start hour (1-based) and x the quote features
augmented with the clicked lead time.  No reference-price terms appear at
this level.  Window prices are constrained so the cheapest window equals
the already-displayed first-level price; the remaining freedom is a
single cost markup found by 1-D grid search.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .kernels import mnl_nll_grad, mnl_probabilities
from .mnl import BETA_FLOOR, UnidentifiableFitError, _fit_packed

logger = logging.getLogger(__name__)

STANDARD_WINDOW_COUNTS = {12: 2, 8: 3, 6: 4, 4: 6}


@dataclass(frozen=True)
class WindowCatalog:
    """Ordered time-window descriptors: (start_hour, length_hours) per option."""

    windows: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        windows = tuple((int(s), int(n)) for s, n in self.windows)
        object.__setattr__(self, "windows", windows)
        if not windows:
            raise ValueError("catalog needs at least one window")
        if any(not (0 <= s < 24 and 1 <= n <= 24) for s, n in windows):
            raise ValueError("window hours out of range")
        if list(windows) != sorted(windows):
            raise ValueError("windows must be ordered by start hour")

    @property
    def num_windows(self) -> int:
        return len(self.windows)

    @classmethod
    def standard(cls, num_windows: int) -> "WindowCatalog":
        """One of the sanctioned even bucketings of the 24-hour day."""
        if num_windows not in STANDARD_WINDOW_COUNTS:
            raise ValueError(
                f"no standard catalog with {num_windows} windows; "
                f"choose from {sorted(STANDARD_WINDOW_COUNTS)} or declare a custom set"
            )
        length = STANDARD_WINDOW_COUNTS[num_windows]
        return cls(tuple((k * length, length) for k in range(num_windows)))


@dataclass(frozen=True)
class WindowMnlParams:
    """Second-level MNL coefficients; beta is shared across windows."""

    alpha: tuple[float, ...]
    beta: float
    gamma_vec: tuple[float, ...]
    delta: float
    feature_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        object.__setattr__(self, "gamma_vec", tuple(float(g) for g in self.gamma_vec))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "delta", float(self.delta))
        if self.beta <= 0:
            raise ValueError("beta must be strictly positive")
        if self.feature_names and len(self.feature_names) != len(self.gamma_vec):
            raise ValueError("feature_names must match gamma_vec length")

    @property
    def num_windows(self) -> int:
        return len(self.alpha)


@dataclass(frozen=True)
class SecondLevelObservation:
    """One quote at the window level; chosen_window 0 means no purchase.

    ``features`` are the quote features augmented with the clicked (or
    imputed) lead time as the final component.
    """

    features: tuple[float, ...]
    window_prices: tuple[float, ...]
    chosen_window: int
    imputed: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", tuple(float(v) for v in self.features))
        object.__setattr__(
            self, "window_prices", tuple(float(p) for p in self.window_prices)
        )
        if not 0 <= self.chosen_window <= len(self.window_prices):
            raise ValueError("chosen_window out of range")
        if self.imputed and self.chosen_window != 0:
            raise ValueError("imputed rows must be no-purchase rows")


def window_features(x_base: Sequence[float], lead_time: int) -> tuple[float, ...]:
    """Quote features augmented with the clicked lead time (the convention
    every second-level call site shares)."""
    return tuple(float(v) for v in x_base) + (float(lead_time),)


def window_utilities(params: WindowMnlParams, x_i, prices) -> np.ndarray:
    x = np.asarray(x_i, dtype=np.float64)
    p = np.asarray(prices, dtype=np.float64)
    m = params.num_windows
    if p.shape != (m,):
        raise ValueError(f"expected {m} window prices, got {p.shape}")
    if x.shape != (len(params.gamma_vec),):
        raise ValueError(
            f"expected {len(params.gamma_vec)} features, got {x.shape}"
        )
    j = np.arange(1, m + 1, dtype=np.float64)
    return (
        np.asarray(params.alpha)
        - params.beta * p
        + float(np.dot(params.gamma_vec, x))
        + params.delta * j
    )


def window_probabilities(params: WindowMnlParams, x_i, prices) -> np.ndarray:
    """Probabilities over no-purchase (index 0) and windows 1..M."""
    p = np.asarray(prices, dtype=np.float64)
    if np.any(p < 0):
        raise ValueError("window prices must be nonnegative")
    util = window_utilities(params, x_i, p)
    if not np.all(np.isfinite(util)):
        raise ValueError("non-finite window utility")
    mask = np.ones((1, params.num_windows), dtype=bool)
    return mnl_probabilities(np.ascontiguousarray(util[None, :]), mask)[0]


@dataclass
class UnconvertedQuote:
    """Input row for click imputation: the base-model probabilities and the
    full window price matrix that was (or would have been) displayed."""

    features_base: tuple[float, ...]
    base_probs: np.ndarray          # (L+1,) from the routed first-level model
    window_prices: np.ndarray       # (L, M)


def impute_clicks(
    rows: Sequence[UnconvertedQuote], seed: int
) -> tuple[list[SecondLevelObservation], int]:
    """Sample a clicked lead time for each unconverted quote.

    Lead time i is drawn with probability P(Y1=i) / (1 - P(Y1=0)); the row
    becomes a no-purchase window observation flagged as imputed.  Rows
    whose base model puts all mass on no-purchase are dropped; the count
    of dropped rows is returned alongside.
    """
    rng = np.random.default_rng(seed)
    out: list[SecondLevelObservation] = []
    dropped = 0
    for row in rows:
        probs = np.asarray(row.base_probs, dtype=np.float64)
        purchase_mass = 1.0 - probs[0]
        if purchase_mass <= 1e-12:
            dropped += 1
            continue
        weights = probs[1:] / purchase_mass
        i = int(rng.choice(weights.size, p=weights / weights.sum())) + 1
        out.append(
            SecondLevelObservation(
                features=window_features(row.features_base, i),
                window_prices=tuple(np.asarray(row.window_prices)[i - 1]),
                chosen_window=0,
                imputed=True,
            )
        )
    if dropped:
        logger.warning("dropped %d unconverted rows with no purchase mass", dropped)
    return out, dropped


def _trend_orthogonal_basis(m: int) -> np.ndarray:
    """Orthonormal basis of the intercept directions orthogonal to the
    constant and linear-in-j directions; removing those keeps (alpha, delta)
    jointly identified."""
    if m < 3:
        return np.zeros((m, 0))
    base = np.column_stack([np.ones(m), np.arange(1, m + 1, dtype=np.float64)])
    q, _ = np.linalg.qr(base, mode="complete")
    return q[:, 2:]


@dataclass(frozen=True)
class WindowFitConfig:
    tol: float = 1e-6
    max_iter: int = 500
    beta_floor: float = BETA_FLOOR


def fit_window_model(
    rows: Sequence[SecondLevelObservation],
    config: WindowFitConfig = WindowFitConfig(),
    feature_names: tuple[str, ...] = (),
) -> WindowMnlParams:
    """Convex MLE of the window MNL with beta boxed to [beta_floor, inf).

    Per-window intercepts are constrained orthogonal to the linear trend
    in j (which delta carries) and to share a common level mu, so the fit
    is identified.
    """
    if not rows:
        raise UnidentifiableFitError("no second-level rows")
    m = len(rows[0].window_prices)
    n_feat = len(rows[0].features)
    prices = np.array([r.window_prices for r in rows], dtype=np.float64)
    feats_x = np.array([r.features for r in rows], dtype=np.float64)
    chosen = np.array([r.chosen_window for r in rows], dtype=np.int64)
    if not (chosen > 0).any():
        raise UnidentifiableFitError("no purchases in second-level rows")
    if np.unique(prices).size < 2:
        raise UnidentifiableFitError("zero window price variation; beta unidentifiable")

    basis = _trend_orthogonal_basis(m)
    n_tau = basis.shape[1]
    use_delta = m >= 2
    # theta layout: [mu, tau.., beta, gamma.., delta?]
    n_par = 1 + n_tau + 1 + n_feat + (1 if use_delta else 0)
    n = len(rows)
    feats = np.zeros((n, m, n_par), dtype=np.float64)
    feats[:, :, 0] = 1.0
    if n_tau:
        feats[:, :, 1 : 1 + n_tau] = basis[None, :, :]
    feats[:, :, 1 + n_tau] = -prices
    feats[:, :, 2 + n_tau : 2 + n_tau + n_feat] = feats_x[:, None, :]
    if use_delta:
        feats[:, :, -1] = np.arange(1, m + 1, dtype=np.float64)[None, :]
    offered = np.ones((n, m), dtype=bool)

    bounds: list[tuple[float | None, float | None]] = [(None, None)] * n_par
    bounds[1 + n_tau] = (config.beta_floor, None)
    x0 = np.zeros(n_par)
    x0[1 + n_tau] = config.beta_floor
    theta, _, converged = _fit_packed(
        feats, offered, chosen, bounds, x0, config.tol, config.max_iter
    )
    if not converged:
        logger.warning("window MLE did not reach gradient tolerance")
    mu = theta[0]
    tau = theta[1 : 1 + n_tau]
    alpha = mu + (basis @ tau if n_tau else np.zeros(m))
    names = feature_names or tuple(f"x{k}" for k in range(n_feat))
    return WindowMnlParams(
        alpha=tuple(alpha),
        beta=float(theta[1 + n_tau]),
        gamma_vec=tuple(theta[2 + n_tau : 2 + n_tau + n_feat]),
        delta=float(theta[-1]) if use_delta else 0.0,
        feature_names=names,
    )


def window_nll(params: WindowMnlParams, rows: Sequence[SecondLevelObservation]) -> float:
    total = 0.0
    for r in rows:
        probs = window_probabilities(params, np.asarray(r.features), r.window_prices)
        total -= float(np.log(probs[r.chosen_window]))
    return total


@dataclass(frozen=True)
class WindowGridConfig:
    points: int = 101
    refine: bool = True
    refine_span_steps: int = 5


def price_windows(
    lead_time: int,
    first_level_price: float,
    window_costs,
    params: WindowMnlParams,
    x_i,
    price_ceiling: float,
    grid: WindowGridConfig = WindowGridConfig(),
) -> np.ndarray:
    """Window prices for one lead time under the consistency constraint.

    Every window whose cost equals the minimum cost is pinned to the
    already-quoted first-level price; the others are priced
    ``max(first_level_price, cost + m3)`` (capped at the ceiling), with the
    markup m3 chosen by exhaustive 1-D search over the conditional
    expected margin.  The cheapest displayed window therefore always
    equals the first-level price exactly.
    """
    costs = np.asarray(window_costs, dtype=np.float64)
    if costs.size == 0:
        raise ValueError("empty window cost vector")
    if costs.shape != (params.num_windows,):
        raise ValueError(f"expected {params.num_windows} window costs")
    p1 = float(first_level_price)
    ceiling = max(float(price_ceiling), p1)
    pinned = costs == costs.min()

    def candidate_prices(m3: np.ndarray) -> np.ndarray:
        prices = np.minimum(np.maximum(p1, costs[None, :] + m3[:, None]), ceiling)
        prices[:, pinned] = p1
        return prices

    def best_over(m3_grid: np.ndarray) -> tuple[float, float]:
        prices = candidate_prices(m3_grid)
        util = (
            np.asarray(params.alpha)[None, :]
            - params.beta * prices
            + float(np.dot(params.gamma_vec, np.asarray(x_i, dtype=np.float64)))
            + params.delta * np.arange(1, params.num_windows + 1)[None, :]
        )
        probs = mnl_probabilities(
            np.ascontiguousarray(util), np.ones(prices.shape, dtype=bool)
        )
        margin = ((prices - costs[None, :]) * probs[:, 1:]).sum(axis=1)
        k = int(np.argmax(margin))     # first max = smallest m3
        return float(margin[k]), float(m3_grid[k])

    hi = max(ceiling - float(costs.min()), 0.0)
    m3_grid = np.linspace(0.0, hi, grid.points)
    best_margin, best_m3 = best_over(m3_grid)
    if grid.refine and grid.points > 1:
        step = hi / (grid.points - 1) if hi > 0 else 0.0
        span = grid.refine_span_steps * step
        fine = np.linspace(
            max(0.0, best_m3 - span), min(hi, best_m3 + span), grid.points
        )
        fine_margin, fine_m3 = best_over(fine)
        if fine_margin > best_margin or (
            fine_margin == best_margin and fine_m3 < best_m3
        ):
            best_m3 = fine_m3
    return candidate_prices(np.array([best_m3]))[0]


def combined_objective(
    x_base,
    base_probs,
    params: WindowMnlParams,
    prices,
    costs,
    alpha_mix: float = 0.0,
) -> float:
    """Two-level expected objective with purchase-renormalized weights.

    sum_i P(Y1=i)/(1 - P(Y1=0)) * sum_{j=0..M} w_ij * P(Y2=j | clicked i)
    where w_ij = (1-alpha)*(p_ij - c_ij) + alpha*c_ij and the outside
    option carries zero price and cost.  The reweighting counts the
    no-purchase mass exactly once, at the second level.
    """
    probs1 = np.asarray(base_probs, dtype=np.float64)
    p = np.asarray(prices, dtype=np.float64)
    c = np.asarray(costs, dtype=np.float64)
    n_lead = probs1.shape[0] - 1
    if p.shape != (n_lead, params.num_windows) or c.shape != p.shape:
        raise ValueError("price/cost matrices must be (L, M)")
    purchase_mass = 1.0 - probs1[0]
    if purchase_mass <= 0.0:
        raise ValueError("base model has no purchase mass")
    total = 0.0
    for i in range(1, n_lead + 1):
        weight = probs1[i] / purchase_mass
        if weight == 0.0:
            continue
        x_i = window_features(x_base, i)
        probs2 = window_probabilities(params, x_i, p[i - 1])
        w = (1.0 - alpha_mix) * (p[i - 1] - c[i - 1]) + alpha_mix * c[i - 1]
        total += weight * float(np.sum(probs2[1:] * w))
    return total
