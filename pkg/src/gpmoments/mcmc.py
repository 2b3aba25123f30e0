"""Metropolis-Hastings sampling and chain summaries.

Proposals are first-class objects carrying a sampler and a log density so
that state-dependent, non-symmetric kernels (the triangular distribution on
[-1, 1] and the chi-squared-with-ceiling-of-theta kernel) get their Hastings
correction right.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DomainError, EvaluationError
from .grids import Grid, GridFn

# abort threshold for consecutive proposals whose target cannot be evaluated
MAX_BAD_STREAK = 10_000


@dataclass(frozen=True)
class Proposal:
    """Proposal kernel: draws a candidate and scores transition densities."""

    kind: str
    sampler: Callable[[np.ndarray, np.random.Generator], np.ndarray]
    log_density: Callable[[np.ndarray, np.ndarray], float]
    symmetric: bool = False

    def sample(self, current: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.sampler(current, rng)


def triangular_proposal() -> Proposal:
    """Tent density on [-1, 1] with apex at the current state.

    g(xi; theta) = (xi + 1)/(theta + 1) on [-1, theta) and
    (1 - xi)/(1 - theta) on [theta, 1]; sampled by inverting the piecewise
    quadratic cdf.
    """

    def sampler(current, rng):
        cur = float(np.atleast_1d(current)[0])
        u = rng.uniform()
        if u <= (cur + 1.0) / 2.0:
            cand = -1.0 + math.sqrt(2.0 * u * (cur + 1.0))
        else:
            cand = 1.0 - math.sqrt(2.0 * (1.0 - u) * (1.0 - cur))
        return np.array([cand])

    def logpdf(candidate, current):
        xi = float(np.atleast_1d(candidate)[0])
        cur = float(np.atleast_1d(current)[0])
        if not -1.0 <= xi <= 1.0:
            return -math.inf
        if xi < cur:
            val = (xi + 1.0) / (cur + 1.0)
        else:
            val = (1.0 - xi) / (1.0 - cur) if cur < 1.0 else 0.0
        return math.log(val) if val > 0 else -math.inf

    return Proposal(kind="triangular", sampler=sampler, log_density=logpdf)


def chi_squared_ceil_proposal() -> Proposal:
    """chi-squared proposal with ceil(current) degrees of freedom.

    State-dependent hence non-symmetric: the acceptance ratio uses the
    chi2_{ceil(current)} density at the candidate against the
    chi2_{ceil(candidate)} density at the current point.
    """

    def _df(state) -> int:
        v = float(np.atleast_1d(state)[0])
        if v <= 0:
            raise DomainError("chi-squared proposal needs a positive state")
        return max(int(math.ceil(v)), 1)

    def sampler(current, rng):
        k = _df(current)
        return np.array([2.0 * rng.standard_gamma(k / 2.0)])

    def logpdf(candidate, current):
        x = float(np.atleast_1d(candidate)[0])
        if x <= 0:
            return -math.inf
        k = _df(current)
        return ((k / 2.0 - 1.0) * math.log(x) - x / 2.0
                - math.lgamma(k / 2.0) - (k / 2.0) * math.log(2.0))

    return Proposal(kind="chi_squared_ceil", sampler=sampler, log_density=logpdf)


def gaussian_rw_proposal(scale: float = 1.0) -> Proposal:
    """Symmetric Gaussian random walk with componentwise scale."""
    if np.any(np.asarray(scale) <= 0):
        raise DomainError("random-walk scale must be positive")

    def sampler(current, rng):
        cur = np.atleast_1d(np.asarray(current, dtype=float))
        return cur + scale * rng.standard_normal(cur.size)

    return Proposal(kind="gaussian_rw", sampler=sampler,
                    log_density=lambda cand, cur: 0.0, symmetric=True)


PROPOSALS = {
    "triangular": triangular_proposal,
    "chi_squared_ceil": chi_squared_ceil_proposal,
    "gaussian_rw": gaussian_rw_proposal,
}


@dataclass(frozen=True)
class Chain:
    """Post burn-in MCMC output."""

    draws: np.ndarray
    log_posts: np.ndarray
    acceptance_rate: float
    seed: int | None
    burn_in: int
    total: int

    @property
    def size(self) -> int:
        return self.draws.shape[0]


def run_mh(log_post, proposal: Proposal, init, total: int, burn_in: int,
           rng: np.random.Generator, seed: int | None = None) -> Chain:
    """Standard Metropolis-Hastings with the given proposal kernel.

    Rejected proposals repeat the current state.  Candidates with -inf
    posterior are rejected outright; more than MAX_BAD_STREAK consecutive
    unusable candidates abort with diagnostics (a sign the proposal and the
    support are incompatible).
    """
    if not total > burn_in >= 0:
        raise DomainError(f"need total > burn_in >= 0, got {total}, {burn_in}")
    log_post_fn = log_post.evaluator if hasattr(log_post, "evaluator") else log_post
    current = np.atleast_1d(np.asarray(init, dtype=float)).copy()
    lcur = float(log_post_fn(current))
    if not np.isfinite(lcur):
        raise DomainError(f"initial state {init} has non-finite log posterior {lcur}")
    p = current.size
    kept = total - burn_in
    draws = np.empty(kept if p == 1 else (kept, p))
    lps = np.empty(kept)
    accepted = 0
    bad_streak = 0
    for it in range(total):
        cand = proposal.sample(current, rng)
        lcand = float(log_post_fn(cand))
        if math.isnan(lcand):
            raise EvaluationError(f"log posterior returned NaN at {cand}")
        if math.isfinite(lcand):
            bad_streak = 0
            ratio = lcand - lcur
            if not proposal.symmetric:
                ratio += (proposal.log_density(current, cand)
                          - proposal.log_density(cand, current))
            if ratio >= 0 or math.log(rng.uniform()) < ratio:
                current = np.atleast_1d(cand).astype(float)
                lcur = lcand
                accepted += 1
        else:
            bad_streak += 1
            if bad_streak > MAX_BAD_STREAK:
                raise EvaluationError(
                    f"{bad_streak} consecutive unusable candidates around "
                    f"state {current}; proposal incompatible with the support")
        if it >= burn_in:
            draws[it - burn_in] = current[0] if p == 1 else current
            lps[it - burn_in] = lcur
    return Chain(draws=draws, log_posts=lps,
                 acceptance_rate=accepted / total,
                 seed=seed, burn_in=burn_in, total=total)


def posterior_mean(chain: Chain) -> np.ndarray | float:
    if chain.size == 0:
        raise DomainError("empty chain")
    return chain.draws.mean(axis=0)


def map_estimate(chain: Chain, log_post) -> np.ndarray | float:
    """Best recorded draw refined by a bounded local maximization.

    Ties on the recorded log posterior break toward the smallest draw
    (lexicographically for vector parameters); the refinement is kept only
    when it strictly improves the objective, so documented tie-breaking
    survives flat stretches.
    """
    if chain.size == 0:
        raise DomainError("empty chain")
    log_post_fn = log_post.evaluator if hasattr(log_post, "evaluator") else log_post
    best = chain.log_posts.max()
    at_best = chain.draws[chain.log_posts == best]
    if at_best.ndim == 1:
        start = float(at_best.min())
    else:
        order = np.lexsort(at_best.T[::-1])
        start = at_best[order[0]]
    lbest = float(log_post_fn(np.atleast_1d(start)))

    sd = chain.draws.std(axis=0)
    if np.all(sd == 0):
        return start
    if chain.draws.ndim == 1:
        lo, hi = start - float(sd), start + float(sd)
        res = minimize_scalar(lambda t: -float(log_post_fn(np.array([t]))),
                              bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-7})
        if np.isfinite(res.fun) and -res.fun > lbest:
            return float(res.x)
        return start
    # coordinatewise bounded refinement for vector parameters
    cur = np.atleast_1d(np.asarray(start, dtype=float)).copy()
    lcur = lbest
    for _ in range(3):
        for k in range(cur.size):
            def neg(t, k=k):
                trial = cur.copy()
                trial[k] = t
                return -float(log_post_fn(trial))
            res = minimize_scalar(neg, bounds=(cur[k] - sd[k], cur[k] + sd[k]),
                                  method="bounded", options={"xatol": 1e-7})
            if np.isfinite(res.fun) and -res.fun > lcur:
                cur[k] = float(res.x)
                lcur = -res.fun
    return cur if lcur > lbest else start


def kernel_density(chain: Chain, bandwidth: float, grid: Grid) -> GridFn:
    """Gaussian kernel density estimate of the draws on a grid."""
    if bandwidth <= 0:
        raise DomainError("bandwidth must be positive")
    draws = np.asarray(chain.draws, dtype=float)
    if draws.ndim != 1:
        raise DomainError("kernel_density summarizes scalar chains")
    z = (grid.points[:, None] - draws[None, :]) / bandwidth
    vals = np.exp(-0.5 * z * z).sum(axis=1) / (draws.size * bandwidth * math.sqrt(2 * math.pi))
    return GridFn(values=vals, grid=grid)


def effective_sample_size(chain: Chain, max_lag: int | None = None) -> float:
    """Initial-positive-sequence estimator of the effective sample size."""
    x = np.asarray(chain.draws, dtype=float)
    if x.ndim != 1:
        x = x[:, 0]
    n = x.size
    if n < 10:
        return float(n)
    x = x - x.mean()
    var = float(x @ x) / n
    if var == 0:
        return float(n)
    if max_lag is None:
        max_lag = min(n // 3, 1000)
    s = 0.0
    for lag in range(1, max_lag):
        c = float(x[:-lag] @ x[lag:]) / n / var
        if c <= 0:
            break
        s += c
    return n / (1.0 + 2.0 * s)
