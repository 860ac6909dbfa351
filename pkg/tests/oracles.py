"""Independent reference implementations used as test oracles.

Everything here is written directly from the definitions (explicit window
enumeration, plain softmax, cartesian-product search) and never calls the
library's computational paths, so agreement is meaningful evidence.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

WEEKEND_DAYS = (5, 6)  # Monday = 0 .. Sunday = 6


def day_sequence(start_day: int, num_options: int) -> list[int]:
    return [(start_day + k) % 7 for k in range(num_options)]


def reference_prices_oracle(prices, start_day, availability=None) -> list[float]:
    """Explicit per-option window enumeration.

    Weekday option: min over up to 3 consecutive available weekdays
    centered on it (weekends skipped when forming adjacency); weekend
    option: min over all available weekend options; unavailable options
    keep their own price.
    """
    L = len(prices)
    avail = list(availability) if availability is not None else [True] * L
    days = day_sequence(start_day, L)
    weekday_positions = [
        k for k in range(L) if avail[k] and days[k] not in WEEKEND_DAYS
    ]
    weekend_positions = [k for k in range(L) if avail[k] and days[k] in WEEKEND_DAYS]
    ref = [float(p) for p in prices]
    for pos, k in enumerate(weekday_positions):
        window = weekday_positions[max(0, pos - 1) : pos + 2]
        ref[k] = min(float(prices[j]) for j in window)
    if weekend_positions:
        weekend_min = min(float(prices[j]) for j in weekend_positions)
        for k in weekend_positions:
            ref[k] = weekend_min
    return ref


def utilities_oracle(alpha, beta_per_option, gamma_per_option, prices, reference):
    """Term-by-term evaluation of the utility formula."""
    out = []
    for k in range(len(prices)):
        i = k + 1
        out.append(
            alpha[0] * i
            + alpha[1] * i * i
            + alpha[2] * math.sqrt(i)
            - beta_per_option[k] * prices[k]
            - gamma_per_option[k] * (prices[k] - reference[k])
        )
    return out


def mnl_probs_oracle(utilities, offered=None) -> list[float]:
    """Plain unshifted softmax with a zero-utility outside option."""
    if offered is None:
        offered = [True] * len(utilities)
    terms = [math.exp(u) if o else 0.0 for u, o in zip(utilities, offered)]
    denom = 1.0 + sum(terms)
    return [1.0 / denom] + [t / denom for t in terms]


def finite_difference_gradient(f, theta: np.ndarray, step: float = 1e-5) -> np.ndarray:
    grad = np.zeros_like(theta)
    for k in range(theta.size):
        up = theta.copy()
        up[k] += step
        down = theta.copy()
        down[k] -= step
        grad[k] = (f(up) - f(down)) / (2.0 * step)
    return grad


def brier_oracle(predicted, outcomes) -> float:
    total = 0.0
    for probs, y in zip(predicted, outcomes):
        for k, p in enumerate(probs):
            hit = 1.0 if k == y else 0.0
            total += (p - hit) ** 2
    return total / len(outcomes)


def objective_oracle(
    prices,
    costs,
    start_day,
    alpha,
    beta_per_option,
    gamma_per_option,
    alpha_mix=0.0,
    keep=None,
    availability=None,
) -> float:
    """Reference -> utilities -> probabilities -> weighted sum, composed
    from the oracle pieces only."""
    L = len(prices)
    avail = list(availability) if availability is not None else [True] * L
    ref = reference_prices_oracle(prices, start_day, avail)
    utils = utilities_oracle(alpha, beta_per_option, gamma_per_option, prices, ref)
    probs = mnl_probs_oracle(utils, avail)
    keep = keep if keep is not None else [1.0] * L
    total = 0.0
    for k in range(L):
        w = (1.0 - alpha_mix) * (prices[k] - costs[k]) + alpha_mix * costs[k]
        total += probs[1 + k] * w * keep[k]
    return total


def brute_force_pricing(
    price_candidates,
    costs,
    start_day,
    alpha,
    beta_per_option,
    gamma_per_option,
    alpha_mix=0.0,
    keep=None,
) -> tuple[float, np.ndarray]:
    """Exhaustive search over the cartesian product of per-option price
    candidates (vectorized for speed, but built from the oracle pieces)."""
    L = len(price_candidates)
    grids = np.meshgrid(*[np.asarray(c, dtype=np.float64) for c in price_candidates],
                        indexing="ij")
    combos = np.stack([g.ravel() for g in grids], axis=1)   # (K, L)
    days = day_sequence(start_day, L)
    weekday_positions = [k for k in range(L) if days[k] not in WEEKEND_DAYS]
    weekend_positions = [k for k in range(L) if days[k] in WEEKEND_DAYS]
    ref = combos.copy()
    for pos, k in enumerate(weekday_positions):
        window = weekday_positions[max(0, pos - 1) : pos + 2]
        ref[:, k] = combos[:, window].min(axis=1)
    if weekend_positions:
        ref[:, weekend_positions] = combos[:, weekend_positions].min(
            axis=1, keepdims=True
        )
    i = np.arange(1, L + 1, dtype=np.float64)
    trend = alpha[0] * i + alpha[1] * i * i + alpha[2] * np.sqrt(i)
    beta = np.asarray(beta_per_option, dtype=np.float64)
    gamma = np.asarray(gamma_per_option, dtype=np.float64)
    util = trend[None, :] - beta[None, :] * combos - gamma[None, :] * (combos - ref)
    expu = np.exp(util)
    probs = expu / (1.0 + expu.sum(axis=1, keepdims=True))
    costs = np.asarray(costs, dtype=np.float64)
    keep_v = np.asarray(keep if keep is not None else np.ones(L), dtype=np.float64)
    weight = (1.0 - alpha_mix) * (combos - costs[None, :]) + alpha_mix * costs[None, :]
    values = (probs * weight * keep_v[None, :]).sum(axis=1)
    best = int(np.argmax(values))
    return float(values[best]), combos[best]
