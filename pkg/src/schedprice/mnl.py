"""Reference-price-effects multinomial logit over lead-time options.

Utility of option i (1-based) for one quote:

    u_i = a1*i + a2*i^2 + a3*sqrt(i) - beta_b(i)*p_i - gamma_b(i)*(p_i - r_i)

where b(i) is the option's coefficient bucket, p the displayed prices and
r the local reference prices.  The outside (no-purchase) option has
utility 0.  The negative log-likelihood is convex in all coefficients, so
fitting is a bounded convex minimization (L-BFGS-B) started from zeros.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize

from .calendar import DayClass, LeadTimeCalendar, day_class
from .kernels import mnl_nll_grad, mnl_probabilities

logger = logging.getLogger(__name__)

BETA_FLOOR = 1e-4


class UnidentifiableFitError(ValueError):
    """Raised when the data cannot pin down the price coefficients."""

    def __init__(self, message: str, buckets: Sequence[int] = ()):
        super().__init__(message)
        self.buckets = tuple(buckets)


@dataclass(frozen=True)
class BucketMap:
    """Assignment of each option to a coefficient bucket (0..B-1)."""

    bucket_of: tuple[int, ...]

    def __post_init__(self) -> None:
        buckets = tuple(int(b) for b in self.bucket_of)
        if not buckets:
            raise ValueError("bucket map must cover at least one option")
        used = sorted(set(buckets))
        if used != list(range(len(used))):
            raise ValueError(f"bucket indices must be contiguous from 0, got {used}")
        object.__setattr__(self, "bucket_of", buckets)

    @property
    def num_options(self) -> int:
        return len(self.bucket_of)

    @property
    def num_buckets(self) -> int:
        return max(self.bucket_of) + 1

    def as_array(self) -> np.ndarray:
        return np.asarray(self.bucket_of, dtype=np.int64)


def single_bucket_map(num_options: int) -> BucketMap:
    """One shared (beta, gamma) pair for every option."""
    return BucketMap((0,) * num_options)


def default_bucket_map(calendar: LeadTimeCalendar) -> BucketMap:
    """Calendar-based bucketing to keep the coefficient count small.

    Weekday options (in calendar order, availability ignored) are grouped
    as first 3 / next 3 / remainder, weekend options form one bucket; for a
    two-week horizon this yields the 3/3/4-weekday plus 4-weekend layout.
    Groups that would be empty are dropped and indices compacted.
    """
    weekdays = [
        i
        for i in range(1, calendar.num_options + 1)
        if day_class(calendar, i) is DayClass.WEEKDAY
    ]
    weekends = [
        i
        for i in range(1, calendar.num_options + 1)
        if day_class(calendar, i) is DayClass.WEEKEND
    ]
    groups = [weekdays[:3], weekdays[3:6], weekdays[6:], weekends]
    bucket_of = [0] * calendar.num_options
    next_bucket = 0
    for group in groups:
        if not group:
            continue
        for i in group:
            bucket_of[i - 1] = next_bucket
        next_bucket += 1
    return BucketMap(tuple(bucket_of))


@dataclass(frozen=True)
class MnlParams:
    """Fitted coefficients of one market segment's choice model."""

    alpha: tuple[float, float, float]
    beta: tuple[float, ...]
    gamma: tuple[float, ...]
    bucket_map: BucketMap

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))
        if len(self.alpha) != 3:
            raise ValueError("alpha must have exactly 3 trend coefficients")
        n_buckets = self.bucket_map.num_buckets
        if len(self.beta) != n_buckets or len(self.gamma) != n_buckets:
            raise ValueError(
                f"need {n_buckets} beta/gamma values, got "
                f"{len(self.beta)}/{len(self.gamma)}"
            )
        if any(b <= 0 for b in self.beta):
            raise ValueError("beta must be strictly positive in every bucket")
        if any(g < 0 for g in self.gamma):
            raise ValueError("gamma must be nonnegative in every bucket")

    @property
    def num_options(self) -> int:
        return self.bucket_map.num_options

    def beta_per_option(self) -> np.ndarray:
        return np.asarray(self.beta, dtype=np.float64)[self.bucket_map.as_array()]

    def gamma_per_option(self) -> np.ndarray:
        return np.asarray(self.gamma, dtype=np.float64)[self.bucket_map.as_array()]

    def trend(self) -> np.ndarray:
        """Lead-time trend a1*i + a2*i^2 + a3*sqrt(i) for i = 1..L."""
        i = np.arange(1, self.num_options + 1, dtype=np.float64)
        a1, a2, a3 = self.alpha
        return a1 * i + a2 * i * i + a3 * np.sqrt(i)

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [np.asarray(self.alpha), np.asarray(self.beta), np.asarray(self.gamma)]
        )

    @classmethod
    def from_vector(cls, theta: np.ndarray, bucket_map: BucketMap) -> "MnlParams":
        n_buckets = bucket_map.num_buckets
        if theta.shape != (3 + 2 * n_buckets,):
            raise ValueError(f"parameter vector has wrong shape {theta.shape}")
        return cls(
            alpha=tuple(theta[:3]),
            beta=tuple(theta[3 : 3 + n_buckets]),
            gamma=tuple(theta[3 + n_buckets :]),
            bucket_map=bucket_map,
        )


@dataclass(frozen=True)
class ChoiceObservation:
    """One logged quote: offered prices, references, and the choice made."""

    prices: tuple[float, ...]
    reference: tuple[float, ...]
    offered: tuple[bool, ...]
    chosen: int

    def __post_init__(self) -> None:
        prices = tuple(float(p) for p in self.prices)
        reference = tuple(float(r) for r in self.reference)
        offered = tuple(bool(o) for o in self.offered)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "reference", reference)
        object.__setattr__(self, "offered", offered)
        n = len(prices)
        if len(reference) != n or len(offered) != n:
            raise ValueError("prices, reference, and offered must share a length")
        if not 0 <= self.chosen <= n:
            raise ValueError(f"chosen={self.chosen} out of range 0..{n}")
        if self.chosen > 0 and not offered[self.chosen - 1]:
            raise ValueError(f"chosen option {self.chosen} is not offered")


class ChoiceData:
    """Columnar batch of choice observations for fast likelihood work."""

    def __init__(
        self,
        prices: np.ndarray,
        reference: np.ndarray,
        offered: np.ndarray,
        chosen: np.ndarray,
    ):
        self.prices = np.ascontiguousarray(prices, dtype=np.float64)
        self.reference = np.ascontiguousarray(reference, dtype=np.float64)
        self.offered = np.ascontiguousarray(offered, dtype=bool)
        self.chosen = np.ascontiguousarray(chosen, dtype=np.int64)
        n, L = self.prices.shape
        if self.reference.shape != (n, L) or self.offered.shape != (n, L):
            raise ValueError("price/reference/offered shapes disagree")
        if self.chosen.shape != (n,):
            raise ValueError("chosen has wrong shape")
        if n == 0:
            raise ValueError("empty choice data")
        if self.chosen.min() < 0 or self.chosen.max() > L:
            raise ValueError("chosen outside 0..L")
        conv = self.chosen > 0
        if conv.any() and not self.offered[np.flatnonzero(conv), self.chosen[conv] - 1].all():
            raise ValueError("some rows chose an option that was not offered")

    @property
    def num_rows(self) -> int:
        return self.prices.shape[0]

    @property
    def num_options(self) -> int:
        return self.prices.shape[1]

    def subset(self, idx: np.ndarray) -> "ChoiceData":
        return ChoiceData(
            self.prices[idx], self.reference[idx], self.offered[idx], self.chosen[idx]
        )

    @classmethod
    def from_observations(cls, data: Iterable[ChoiceObservation]) -> "ChoiceData":
        rows = list(data)
        if not rows:
            raise ValueError("empty choice data")
        return cls(
            prices=np.array([r.prices for r in rows]),
            reference=np.array([r.reference for r in rows]),
            offered=np.array([r.offered for r in rows]),
            chosen=np.array([r.chosen for r in rows]),
        )


def as_choice_data(data) -> ChoiceData:
    if isinstance(data, ChoiceData):
        return data
    return ChoiceData.from_observations(data)


@dataclass(frozen=True)
class FitConfig:
    """Convergence contract for the convex MLE."""

    tol: float = 1e-6          # projected-gradient infinity norm
    max_iter: int = 500
    beta_floor: float = BETA_FLOOR


def utilities(
    params: MnlParams,
    prices,
    reference,
    offered=None,
) -> np.ndarray:
    """Per-option utilities; unavailable options are masked downstream."""
    p = np.asarray(prices, dtype=np.float64)
    r = np.asarray(reference, dtype=np.float64)
    L = params.num_options
    if p.shape != (L,) or r.shape != (L,):
        raise ValueError(f"expected {L} prices and references, got {p.shape}/{r.shape}")
    return params.trend() - params.beta_per_option() * p - params.gamma_per_option() * (p - r)


def choice_probabilities(
    params: MnlParams,
    prices,
    reference,
    offered=None,
) -> np.ndarray:
    """Probabilities over no-purchase (index 0) and options 1..L."""
    L = params.num_options
    if offered is None:
        mask = np.ones(L, dtype=bool)
    else:
        mask = np.asarray(offered, dtype=bool)
        if mask.shape != (L,):
            raise ValueError(f"offered mask has wrong shape {mask.shape}")
    util = utilities(params, prices, reference)
    if not np.all(np.isfinite(util[mask])):
        raise ValueError("non-finite utility")
    return mnl_probabilities(
        np.ascontiguousarray(util[None, :]), np.ascontiguousarray(mask[None, :])
    )[0]


def build_feature_tensor(data: ChoiceData, bucket_map: BucketMap) -> np.ndarray:
    """Per-row, per-option feature vectors matching the parameter layout.

    Column order is (a1, a2, a3, beta_0.., gamma_0..); the likelihood and
    gradient kernels consume this tensor directly.
    """
    n, L = data.prices.shape
    if bucket_map.num_options != L:
        raise ValueError("bucket map does not match option count")
    n_buckets = bucket_map.num_buckets
    n_par = 3 + 2 * n_buckets
    i = np.arange(1, L + 1, dtype=np.float64)
    feats = np.zeros((n, L, n_par), dtype=np.float64)
    feats[:, :, 0] = i
    feats[:, :, 1] = i * i
    feats[:, :, 2] = np.sqrt(i)
    buckets = bucket_map.as_array()
    cols = np.arange(L)
    feats[:, cols, 3 + buckets] = -data.prices
    feats[:, cols, 3 + n_buckets + buckets] = -(data.prices - data.reference)
    return feats


def negative_log_likelihood(params: MnlParams, data) -> float:
    """Summed negative log-likelihood of the observed choices."""
    batch = as_choice_data(data)
    feats = build_feature_tensor(batch, params.bucket_map)
    nll, _ = mnl_nll_grad(params.to_vector(), feats, batch.offered, batch.chosen)
    return float(nll)


def nll_gradient(params: MnlParams, data) -> np.ndarray:
    """Exact gradient of the NLL w.r.t. (a1, a2, a3, beta.., gamma..).

    Reference prices are treated as data, so the model is linear in all
    coefficients and the score has the expected-minus-observed form.
    """
    batch = as_choice_data(data)
    feats = build_feature_tensor(batch, params.bucket_map)
    _, grad = mnl_nll_grad(params.to_vector(), feats, batch.offered, batch.chosen)
    return grad


def check_identifiable(data: ChoiceData, bucket_map: BucketMap) -> None:
    """Raise UnidentifiableFitError when beta cannot be estimated."""
    if not (data.chosen > 0).any():
        raise UnidentifiableFitError(
            "no purchases in the data; choice coefficients are unidentifiable",
            buckets=range(bucket_map.num_buckets),
        )
    buckets = bucket_map.as_array()
    bad = []
    for b in range(bucket_map.num_buckets):
        prices = data.prices[:, buckets == b][data.offered[:, buckets == b]]
        if prices.size == 0 or prices.max() - prices.min() < 1e-12:
            bad.append(b)
    if bad:
        raise UnidentifiableFitError(
            f"zero price variation in buckets {bad}; beta is unidentifiable there",
            buckets=bad,
        )


def _hessian_packed(
    theta: np.ndarray, feats: np.ndarray, offered: np.ndarray, chosen: np.ndarray
) -> np.ndarray:
    util = feats @ theta
    probs = mnl_probabilities(np.ascontiguousarray(util), offered)[:, 1:]
    second = np.einsum("nl,nlp,nlq->pq", probs, feats, feats)
    mean = np.einsum("nl,nlp->np", probs, feats)
    return second - mean.T @ mean


def _newton_polish(
    theta: np.ndarray,
    feats: np.ndarray,
    offered: np.ndarray,
    chosen: np.ndarray,
    bounds: list[tuple[float | None, float | None]],
    tol: float,
    max_steps: int = 30,
) -> tuple[np.ndarray, bool]:
    """Projected Newton steps with the exact Hessian.

    L-BFGS-B gets close but stalls on ftol long before a 1e-6 absolute
    gradient norm when N is large; near the optimum of this convex
    objective a handful of Newton steps close the gap.
    """
    lo = np.array([-np.inf if b[0] is None else b[0] for b in bounds])
    hi = np.array([np.inf if b[1] is None else b[1] for b in bounds])
    nll, grad = mnl_nll_grad(theta, feats, offered, chosen)
    # NLL differences near the optimum sink below float64 resolution for
    # large N, so steps are also accepted on projected-gradient decrease.
    nll_slack = 1e-12 * max(abs(nll), 1.0)
    for _ in range(max_steps):
        pg_norm = float(np.abs(_projected_gradient(theta, grad, bounds)).max())
        if pg_norm <= tol:
            return theta, True
        at_lo = (theta <= lo + 1e-12) & (grad > 0)
        at_hi = (theta >= hi - 1e-12) & (grad < 0)
        free = ~(at_lo | at_hi)
        if not free.any():
            return theta, True
        hess = _hessian_packed(theta, feats, offered, chosen)[np.ix_(free, free)]
        ridge = 1e-10 * max(float(np.abs(np.diag(hess)).max()), 1.0)
        hess[np.diag_indices_from(hess)] += ridge
        try:
            direction = np.linalg.solve(hess, grad[free])
        except np.linalg.LinAlgError:
            direction = np.linalg.lstsq(hess, grad[free], rcond=None)[0]
        step = 1.0
        improved = False
        for _ in range(30):
            candidate = theta.copy()
            candidate[free] -= step * direction
            np.clip(candidate, lo, hi, out=candidate)
            cand_nll, cand_grad = mnl_nll_grad(candidate, feats, offered, chosen)
            cand_pg = float(
                np.abs(_projected_gradient(candidate, cand_grad, bounds)).max()
            )
            if cand_nll <= nll + nll_slack and cand_pg < pg_norm:
                theta, nll, grad = candidate, cand_nll, cand_grad
                improved = True
                break
            step *= 0.5
        if not improved:
            break
    pg = _projected_gradient(theta, grad, bounds)
    return theta, float(np.abs(pg).max()) <= tol


def _fit_packed(
    feats: np.ndarray,
    offered: np.ndarray,
    chosen: np.ndarray,
    bounds: list[tuple[float | None, float | None]],
    x0: np.ndarray,
    tol: float,
    max_iter: int,
) -> tuple[np.ndarray, float, bool]:
    """Bounded convex MLE on a prebuilt feature tensor; returns (theta, nll, converged)."""

    def objective(theta: np.ndarray):
        return mnl_nll_grad(theta, feats, offered, chosen)

    result = minimize(
        objective,
        np.asarray(x0, dtype=np.float64),
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": max_iter, "gtol": tol, "ftol": 1e-12, "maxls": 40},
    )
    theta = np.asarray(result.x, dtype=np.float64)
    theta, converged = _newton_polish(theta, feats, offered, chosen, bounds, tol)
    nll, _ = mnl_nll_grad(theta, feats, offered, chosen)
    # The objective is convex, so the start point bounds the optimum from above.
    nll0, _ = mnl_nll_grad(np.asarray(x0, dtype=np.float64), feats, offered, chosen)
    if nll0 < nll:
        theta, nll = np.asarray(x0, dtype=np.float64).copy(), float(nll0)
    return theta, float(nll), converged


def _projected_gradient(theta, grad, bounds) -> np.ndarray:
    pg = grad.copy()
    for k, (lo, hi) in enumerate(bounds):
        if lo is not None and theta[k] <= lo + 1e-12 and grad[k] > 0:
            pg[k] = 0.0
        if hi is not None and theta[k] >= hi - 1e-12 and grad[k] < 0:
            pg[k] = 0.0
    return pg


def fit_mle(data, bucket_map: BucketMap, config: FitConfig = FitConfig()) -> MnlParams:
    """Maximum-likelihood fit of the reference-price MNL.

    beta is boxed to [beta_floor, inf) so the pricing markup 1/(beta+gamma)
    stays finite; gamma is boxed to [0, inf).  Starts from all-zeros (beta
    at its floor); convexity makes the optimum start-independent.
    """
    batch = as_choice_data(data)
    check_identifiable(batch, bucket_map)
    feats = build_feature_tensor(batch, bucket_map)
    n_buckets = bucket_map.num_buckets
    bounds: list[tuple[float | None, float | None]] = [(None, None)] * 3
    bounds += [(config.beta_floor, None)] * n_buckets
    bounds += [(0.0, None)] * n_buckets
    x0 = np.zeros(3 + 2 * n_buckets)
    x0[3 : 3 + n_buckets] = config.beta_floor
    theta, _, converged = _fit_packed(
        feats, batch.offered, batch.chosen, bounds, x0, config.tol, config.max_iter
    )
    if not converged:
        logger.warning(
            "MLE did not reach gradient tolerance %.1e within %d iterations",
            config.tol,
            config.max_iter,
        )
    return MnlParams.from_vector(theta, bucket_map)


def observed_information(params: MnlParams, data) -> np.ndarray:
    """Hessian of the NLL at ``params`` (exact, from the MNL moment form)."""
    batch = as_choice_data(data)
    feats = build_feature_tensor(batch, params.bucket_map)
    util = feats @ params.to_vector()
    probs = mnl_probabilities(util, batch.offered)[:, 1:]
    second = np.einsum("nl,nlp,nlq->pq", probs, feats, feats)
    mean = np.einsum("nl,nlp->np", probs, feats)
    return second - np.einsum("np,nq->pq", mean, mean)


def standard_errors(params: MnlParams, data) -> np.ndarray:
    """Asymptotic standard errors from the inverse observed information."""
    info = observed_information(params, data)
    cov = np.linalg.pinv(info)
    return np.sqrt(np.clip(np.diag(cov), 0.0, None))
