"""Numba-compiled loop kernels; semantics match ``numpy_impl`` exactly.

Compiled lazily with ``cache=True`` so the JIT cost is paid once per
machine.  See ``numpy_impl`` for the documented contracts.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def reference_prices_batch(
    prices: np.ndarray,
    weekday_order: np.ndarray,
    weekend_idx: np.ndarray,
) -> np.ndarray:
    out = prices.copy()
    n_rows = prices.shape[0]
    n_wd = weekday_order.shape[0]
    n_we = weekend_idx.shape[0]
    for g in range(n_rows):
        for k in range(n_wd):
            lo = k - 1 if k > 0 else 0
            hi = k + 1 if k < n_wd - 1 else n_wd - 1
            best = prices[g, weekday_order[lo]]
            for t in range(lo + 1, hi + 1):
                v = prices[g, weekday_order[t]]
                if v < best:
                    best = v
            out[g, weekday_order[k]] = best
        if n_we > 0:
            best = prices[g, weekend_idx[0]]
            for t in range(1, n_we):
                v = prices[g, weekend_idx[t]]
                if v < best:
                    best = v
            for t in range(n_we):
                out[g, weekend_idx[t]] = best
    return out


@njit(cache=True)
def mnl_probabilities(util: np.ndarray, offered: np.ndarray) -> np.ndarray:
    n_rows, n_opts = util.shape
    probs = np.zeros((n_rows, n_opts + 1), dtype=np.float64)
    for n in range(n_rows):
        shift = 0.0
        for l in range(n_opts):
            if offered[n, l] and util[n, l] > shift:
                shift = util[n, l]
        exp0 = np.exp(-shift)
        denom = exp0
        for l in range(n_opts):
            if offered[n, l]:
                denom += np.exp(util[n, l] - shift)
        probs[n, 0] = exp0 / denom
        for l in range(n_opts):
            if offered[n, l]:
                probs[n, 1 + l] = np.exp(util[n, l] - shift) / denom
    return probs


@njit(cache=True)
def mnl_nll_grad(
    theta: np.ndarray,
    feats: np.ndarray,
    offered: np.ndarray,
    chosen: np.ndarray,
) -> tuple[float, np.ndarray]:
    n_rows, n_opts, n_par = feats.shape
    nll = 0.0
    grad = np.zeros(n_par, dtype=np.float64)
    util = np.empty(n_opts, dtype=np.float64)
    for n in range(n_rows):
        shift = 0.0
        for l in range(n_opts):
            if offered[n, l]:
                u = 0.0
                for p in range(n_par):
                    u += feats[n, l, p] * theta[p]
                util[l] = u
                if u > shift:
                    shift = u
        exp0 = np.exp(-shift)
        denom = exp0
        for l in range(n_opts):
            if offered[n, l]:
                denom += np.exp(util[l] - shift)
        c = chosen[n]
        if c == 0:
            chosen_util = 0.0
        else:
            chosen_util = util[c - 1]
            for p in range(n_par):
                grad[p] -= feats[n, c - 1, p]
        nll += np.log(denom) + shift - chosen_util
        for l in range(n_opts):
            if offered[n, l]:
                pr = np.exp(util[l] - shift) / denom
                for p in range(n_par):
                    grad[p] += pr * feats[n, l, p]
    return nll, grad


@njit(cache=True)
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
    n1 = m1_grid.shape[0]
    n2 = m2_grid.shape[0]
    n_opts = costs.shape[0]
    n_wd = weekday_order.shape[0]
    n_we = weekend_idx.shape[0]
    obj = np.empty((n1, n2), dtype=np.float64)
    prices = np.empty(n_opts, dtype=np.float64)
    ref = np.empty(n_opts, dtype=np.float64)
    util = np.empty(n_opts, dtype=np.float64)
    for a in range(n1):
        m1 = m1_grid[a]
        for b in range(n2):
            m2 = m2_grid[b]
            for l in range(n_opts):
                p = costs[l] + markup_offset[l] + m2
                if m1 > p:
                    p = m1
                if p < floor[l]:
                    p = floor[l]
                elif p > ceiling[l]:
                    p = ceiling[l]
                prices[l] = p
                ref[l] = p
            for k in range(n_wd):
                lo = k - 1 if k > 0 else 0
                hi = k + 1 if k < n_wd - 1 else n_wd - 1
                best = prices[weekday_order[lo]]
                for t in range(lo + 1, hi + 1):
                    v = prices[weekday_order[t]]
                    if v < best:
                        best = v
                ref[weekday_order[k]] = best
            if n_we > 0:
                best = prices[weekend_idx[0]]
                for t in range(1, n_we):
                    v = prices[weekend_idx[t]]
                    if v < best:
                        best = v
                for t in range(n_we):
                    ref[weekend_idx[t]] = best
            shift = 0.0
            for l in range(n_opts):
                if offered[l]:
                    u = trend[l] - beta[l] * prices[l] - gamma[l] * (prices[l] - ref[l])
                    util[l] = u
                    if u > shift:
                        shift = u
            denom = np.exp(-shift)
            for l in range(n_opts):
                if offered[l]:
                    denom += np.exp(util[l] - shift)
            total = 0.0
            for l in range(n_opts):
                if offered[l]:
                    pr = np.exp(util[l] - shift) / denom
                    w = (1.0 - alpha_mix) * (prices[l] - costs[l]) + alpha_mix * costs[l]
                    total += pr * w * keep_prob[l]
            obj[a, b] = total
    return obj
