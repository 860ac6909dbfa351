"""Assortment objective evaluation and the two-parameter pricing policy.

The policy prices option i at ``max(m1, c_i + 1/(beta_i + gamma_i) + m2)``
clipped into the guardrails: a minimum price m1 plus a cost markup m2.
The optimizer sweeps an (m1, m2) grid, refines once around the incumbent,
and recomputes reference prices inside every evaluation so the reference
effect stays endogenous to the optimization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .calendar import LeadTimeCalendar, reference_prices_matrix
from .kernels import mnl_probabilities, two_param_objective_grid
from .mnl import MnlParams
from .predictors import (
    CancellationModel,
    encode_features_for_cancellation,
    keep_probability_vector,
)


@dataclass(frozen=True)
class ObjectiveConfig:
    """Generalized objective: (1-alpha)*(p-c) + alpha*c per converted option.

    alpha=0 is expected profit, alpha=0.5 scales expected revenue, alpha=1
    is cost-weighted conversion.  ``freeze_reference`` pins the reference
    prices instead of recomputing them from the candidate prices.
    """

    alpha: float = 0.0
    include_cancellation: bool = True
    freeze_reference: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class Guardrails:
    """Per-option price floor and ceiling applied to every quote."""

    floor: tuple[float, ...]
    ceiling: tuple[float, ...]

    def __post_init__(self) -> None:
        floor = tuple(float(f) for f in self.floor)
        ceiling = tuple(float(c) for c in self.ceiling)
        object.__setattr__(self, "floor", floor)
        object.__setattr__(self, "ceiling", ceiling)
        if len(floor) != len(ceiling):
            raise ValueError("floor and ceiling lengths differ")
        for f, c in zip(floor, ceiling):
            if not 0 <= f <= c:
                raise ValueError(f"need 0 <= floor <= ceiling, got ({f}, {c})")

    @classmethod
    def uniform(cls, floor: float, ceiling: float, num_options: int) -> "Guardrails":
        return cls((floor,) * num_options, (ceiling,) * num_options)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.asarray(self.floor, dtype=np.float64),
            np.asarray(self.ceiling, dtype=np.float64),
        )


@dataclass(frozen=True)
class PricingPolicy:
    """The two parameters: minimum price m1 and cost markup m2."""

    m1: float
    m2: float


@dataclass(frozen=True)
class GridConfig:
    m1_points: int = 41
    m2_points: int = 41
    m1_range: tuple[float, float] | None = None
    m2_range: tuple[float, float] | None = None
    refine: bool = True
    refine_span_steps: int = 5     # +- coarse steps covered by the 4x-resolution pass

    def __post_init__(self) -> None:
        if self.m1_points < 1 or self.m2_points < 1:
            raise ValueError("grid needs at least one point per axis")


def policy_prices(
    policy: PricingPolicy,
    costs,
    params: MnlParams,
    guardrails: Guardrails,
) -> np.ndarray:
    """Prices induced by the policy: clip(max(m1, c + 1/(b+g) + m2), floor, ceiling)."""
    costs = np.asarray(costs, dtype=np.float64)
    floor, ceiling = guardrails.arrays()
    denom = params.beta_per_option() + params.gamma_per_option()
    if np.any(denom <= 0):
        raise ValueError("beta + gamma must be positive for every option")
    raw = costs + 1.0 / denom + policy.m2
    return np.clip(np.maximum(policy.m1, raw), floor, ceiling)


def evaluate_objective(
    prices,
    x: Mapping[str, object] | None,
    params: MnlParams,
    costs,
    cancel_model: CancellationModel | None,
    calendar: LeadTimeCalendar,
    config: ObjectiveConfig = ObjectiveConfig(),
) -> float:
    """Expected generalized objective of one price vector.

    Reference prices are recomputed from ``prices`` (unless frozen in the
    config); cancellation enters as P(Z=0 | x, i) per option when enabled.
    """
    prices = np.asarray(prices, dtype=np.float64)
    costs = np.asarray(costs, dtype=np.float64)
    if not (np.all(np.isfinite(prices)) and np.all(np.isfinite(costs))):
        raise ValueError("non-finite prices or costs")
    if config.freeze_reference is not None:
        ref = np.asarray(config.freeze_reference, dtype=np.float64)
    else:
        ref = reference_prices_matrix(prices[None, :], calendar)[0]
    offered = calendar.offered_mask
    util = (
        params.trend()
        - params.beta_per_option() * prices
        - params.gamma_per_option() * (prices - ref)
    )
    probs = mnl_probabilities(
        np.ascontiguousarray(util[None, :]), np.ascontiguousarray(offered[None, :])
    )[0]
    keep = _keep_probabilities(cancel_model, x, params.num_options, config)
    weight = (1.0 - config.alpha) * (prices - costs) + config.alpha * costs
    return float(np.sum(probs[1:] * weight * keep))


def _keep_probabilities(
    cancel_model: CancellationModel | None,
    x: Mapping[str, object] | None,
    num_options: int,
    config: ObjectiveConfig,
) -> np.ndarray:
    if not config.include_cancellation or cancel_model is None:
        return np.ones(num_options)
    from .predictors import ConstantCancellation

    if isinstance(cancel_model, ConstantCancellation) or not cancel_model.feature_names:
        encoded = np.zeros(0)
    else:
        if x is None:
            raise ValueError("cancellation model needs the quote features")
        encoded = _encode_for_model(cancel_model, x)
    return keep_probability_vector(cancel_model, encoded, num_options)


def _encode_for_model(cancel_model, x: Mapping[str, object]) -> np.ndarray:
    """Arrange raw features into the model's design order."""
    values = []
    for name in cancel_model.feature_names:
        if "=" in name:
            feat, symbol = name.split("=", 1)
            values.append(1.0 if str(x.get(feat)) == symbol else 0.0)
        else:
            v = x.get(name)
            values.append(0.0 if v is None else float(v))
    return np.asarray(values, dtype=np.float64)


def optimize_two_param(
    x: Mapping[str, object] | None,
    params: MnlParams,
    costs,
    cancel_model: CancellationModel | None,
    calendar: LeadTimeCalendar,
    guardrails: Guardrails,
    config: ObjectiveConfig = ObjectiveConfig(),
    grid: GridConfig = GridConfig(),
) -> tuple[PricingPolicy, np.ndarray, float]:
    """Exhaustive (m1, m2) grid search with one refinement pass.

    Returns the maximizing policy, its clipped price vector, and the
    objective at those prices.  Ties break to the lexicographically
    smallest (m1, m2).
    """
    costs = np.asarray(costs, dtype=np.float64)
    floor, ceiling = guardrails.arrays()
    offered = calendar.offered_mask
    beta = params.beta_per_option()
    gamma = params.gamma_per_option()
    denom = beta + gamma
    if np.any(denom[offered] <= 0):
        raise ValueError("beta + gamma must be positive for offered options")
    max_ceiling = float(ceiling.max())
    m1_lo, m1_hi = grid.m1_range if grid.m1_range else (0.0, max_ceiling)
    if grid.m2_range:
        m2_lo, m2_hi = grid.m2_range
    else:
        m2_lo, m2_hi = -1.0 / float(denom[offered].min()), max_ceiling
    m1_grid = np.linspace(m1_lo, m1_hi, grid.m1_points)
    m2_grid = np.linspace(m2_lo, m2_hi, grid.m2_points)

    keep = _keep_probabilities(cancel_model, x, params.num_options, config)
    kernel_args = dict(
        costs=costs,
        markup_offset=1.0 / denom,
        floor=floor,
        ceiling=ceiling,
        trend=params.trend(),
        beta=beta,
        gamma=gamma,
        offered=offered,
        weekday_order=calendar.weekday_order(),
        weekend_idx=calendar.weekend_indices(),
        keep_prob=keep,
        alpha_mix=float(config.alpha),
    )
    if config.freeze_reference is not None:
        best = _sweep_frozen(m1_grid, m2_grid, config, params, **kernel_args)
    else:
        surface = two_param_objective_grid(m1_grid, m2_grid, **kernel_args)
        best = _argmax_lexicographic(surface, m1_grid, m2_grid)

    if grid.refine and (grid.m1_points > 1 or grid.m2_points > 1):
        m1_step = (m1_hi - m1_lo) / max(grid.m1_points - 1, 1)
        m2_step = (m2_hi - m2_lo) / max(grid.m2_points - 1, 1)
        span = grid.refine_span_steps
        fine_m1 = np.linspace(
            max(m1_lo, best[1] - span * m1_step),
            min(m1_hi, best[1] + span * m1_step),
            grid.m1_points,
        )
        fine_m2 = np.linspace(
            max(m2_lo, best[2] - span * m2_step),
            min(m2_hi, best[2] + span * m2_step),
            grid.m2_points,
        )
        if config.freeze_reference is not None:
            fine = _sweep_frozen(fine_m1, fine_m2, config, params, **kernel_args)
        else:
            surface = two_param_objective_grid(fine_m1, fine_m2, **kernel_args)
            fine = _argmax_lexicographic(surface, fine_m1, fine_m2)
        if fine[0] > best[0] or (
            fine[0] == best[0] and (fine[1], fine[2]) < (best[1], best[2])
        ):
            best = fine

    policy = PricingPolicy(m1=float(best[1]), m2=float(best[2]))
    prices = policy_prices(policy, costs, params, guardrails)
    objective = evaluate_objective(
        prices, x, params, costs, cancel_model, calendar, config
    )
    return policy, prices, objective


def _argmax_lexicographic(
    surface: np.ndarray, m1_grid: np.ndarray, m2_grid: np.ndarray
) -> tuple[float, float, float]:
    flat = int(np.argmax(surface))    # first occurrence = smallest (m1, m2)
    a, b = divmod(flat, surface.shape[1])
    return float(surface[a, b]), float(m1_grid[a]), float(m2_grid[b])


def _sweep_frozen(
    m1_grid: np.ndarray,
    m2_grid: np.ndarray,
    config: ObjectiveConfig,
    params: MnlParams,
    costs=None,
    markup_offset=None,
    floor=None,
    ceiling=None,
    trend=None,
    beta=None,
    gamma=None,
    offered=None,
    weekday_order=None,
    weekend_idx=None,
    keep_prob=None,
    alpha_mix=0.0,
) -> tuple[float, float, float]:
    """Grid sweep with a pinned reference vector (vectorized, both backends)."""
    ref = np.asarray(config.freeze_reference, dtype=np.float64)
    m1 = np.repeat(m1_grid, m2_grid.size)
    m2 = np.tile(m2_grid, m1_grid.size)
    raw = costs[None, :] + markup_offset[None, :] + m2[:, None]
    prices = np.clip(np.maximum(m1[:, None], raw), floor[None, :], ceiling[None, :])
    util = trend[None, :] - beta[None, :] * prices - gamma[None, :] * (prices - ref[None, :])
    probs = mnl_probabilities(
        np.ascontiguousarray(util), np.ascontiguousarray(np.broadcast_to(offered, prices.shape))
    )
    weight = (1.0 - alpha_mix) * (prices - costs[None, :]) + alpha_mix * costs[None, :]
    obj = (probs[:, 1:] * weight * keep_prob[None, :]).sum(axis=1)
    surface = obj.reshape(m1_grid.size, m2_grid.size)
    return _argmax_lexicographic(surface, m1_grid, m2_grid)
