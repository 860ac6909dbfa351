"""Vectorized pure-numpy kernels; the reference semantics for both backends.

All kernels are pure functions over float64/int64/bool ndarrays.  Option
axes have length L; batch axes (observations, grid cells) come first.
"""

from __future__ import annotations

import numpy as np


def reference_prices_batch(
    prices: np.ndarray,
    weekday_order: np.ndarray,
    weekend_idx: np.ndarray,
) -> np.ndarray:
    """Local reference prices for a batch of price vectors.

    ``prices`` is (G, L).  ``weekday_order`` holds 0-based column indices of
    the available weekday options in calendar order (a weekday is adjacent
    to the next weekday even across a weekend); ``weekend_idx`` holds the
    available weekend columns.  Options listed in neither array (unavailable
    ones) keep their own price as the reference.

    Weekday references are the minimum over a window of up to 3 consecutive
    weekday options centered on the option (2 at the first/last weekday);
    weekend references are the minimum over all weekend options.
    """
    ref = prices.copy()
    if weekday_order.size:
        wp = prices[:, weekday_order]
        win = wp.copy()
        if wp.shape[1] > 1:
            np.minimum(win[:, 1:], wp[:, :-1], out=win[:, 1:])
            np.minimum(win[:, :-1], wp[:, 1:], out=win[:, :-1])
        ref[:, weekday_order] = win
    if weekend_idx.size:
        ref[:, weekend_idx] = prices[:, weekend_idx].min(axis=1, keepdims=True)
    return ref


def mnl_probabilities(util: np.ndarray, offered: np.ndarray) -> np.ndarray:
    """Choice probabilities for utilities (N, L) plus an outside option.

    Index 0 of the result is the no-purchase option (utility 0); columns
    1..L are the offered options.  Unoffered options get probability 0.
    Max-shifted so exponentials never overflow.
    """
    util = np.where(offered, util, -np.inf)
    shift = np.maximum(util.max(axis=1, initial=-np.inf), 0.0)
    expu = np.exp(util - shift[:, None])
    exp0 = np.exp(-shift)
    denom = exp0 + expu.sum(axis=1)
    probs = np.empty((util.shape[0], util.shape[1] + 1), dtype=np.float64)
    probs[:, 0] = exp0 / denom
    probs[:, 1:] = expu / denom[:, None]
    return probs


def mnl_nll_grad(
    theta: np.ndarray,
    feats: np.ndarray,
    offered: np.ndarray,
    chosen: np.ndarray,
) -> tuple[float, np.ndarray]:
    """Negative log-likelihood and its gradient for a linear-utility MNL.

    ``feats`` is (N, L, P): per-row, per-option feature vectors such that
    utility[n, l] = feats[n, l] . theta.  The outside option (chosen == 0)
    has zero utility and zero features.  Gradient is the score-form
    "expected minus observed features" summed over rows.
    """
    util = feats @ theta
    probs = mnl_probabilities(util, offered)
    rows = np.arange(feats.shape[0])
    nll = -float(np.log(probs[rows, chosen]).sum())
    grad = np.einsum("nl,nlp->p", probs[:, 1:], feats)
    conv = chosen > 0
    if conv.any():
        grad -= feats[rows[conv], chosen[conv] - 1, :].sum(axis=0)
    return nll, grad


def two_param_objective_grid(
    m1_grid: np.ndarray,
    m2_grid: np.ndarray,
    costs: np.ndarray,
    markup_offset: np.ndarray,
    floor: np.ndarray,
    ceiling: np.ndarray,
    trend: np.ndarray,
    beta: np.ndarray,
    gamma: np.ndarray,
    offered: np.ndarray,
    weekday_order: np.ndarray,
    weekend_idx: np.ndarray,
    keep_prob: np.ndarray,
    alpha_mix: float,
) -> np.ndarray:
    """Objective surface of the two-parameter (min-price, markup) policy.

    Each grid cell (m1, m2) induces prices
    ``clip(max(m1, costs + markup_offset + m2), floor, ceiling)`` where
    ``markup_offset`` is 1/(beta+gamma) per option.  Reference prices are
    recomputed from the induced prices, then the expected generalized
    objective sum_i P(i) * ((1-a)(p_i-c_i) + a*c_i) * keep_prob_i is
    evaluated.  ``keep_prob`` carries P(Z=0 | x, i) (ones when cancellation
    is excluded).  Returns the (len(m1_grid), len(m2_grid)) surface.
    """
    m1 = np.repeat(m1_grid, m2_grid.size)
    m2 = np.tile(m2_grid, m1_grid.size)
    raw = costs[None, :] + markup_offset[None, :] + m2[:, None]
    prices = np.clip(np.maximum(m1[:, None], raw), floor[None, :], ceiling[None, :])
    ref = reference_prices_batch(prices, weekday_order, weekend_idx)
    util = trend[None, :] - beta[None, :] * prices - gamma[None, :] * (prices - ref)
    probs = mnl_probabilities(util, np.broadcast_to(offered, prices.shape))
    weight = (1.0 - alpha_mix) * (prices - costs[None, :]) + alpha_mix * costs[None, :]
    obj = (probs[:, 1:] * weight * keep_prob[None, :]).sum(axis=1)
    return obj.reshape(m1_grid.size, m2_grid.size)
