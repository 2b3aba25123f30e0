"""Estimating-equation models: moment functions, parameter boxes, priors.

A :class:`MomentModel` bundles the vector moment function h(theta, x) whose
expectation under the data distribution is zero at the true parameter, its
dimensions, the parameter box, the support of the observable, and (for the
built-in models) a simulator of the true data-generating process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import DomainError, EvaluationError
from .grids import Grid


@dataclass(frozen=True)
class MomentModel:
    """Moment restriction system E[h(theta, X)] = 0 with d >= p.

    ``h(theta, x)`` must be vectorized in x and return shape (d, len(x)).
    ``span_fns``, when given, are theta-free functions whose span equals
    span{1, h_1(theta,.), ..., h_d(theta,.)} for every theta (true for all
    built-in models, where the moment functions are polynomial in x); the
    posterior engines exploit this to reuse one basis across the chain.
    """

    name: str
    h: Callable[[np.ndarray, np.ndarray], np.ndarray]
    d: int
    p: int
    theta_box: tuple[tuple[float, float], ...]
    support: tuple[float, float]
    dh_dtheta: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    simulate: Callable[[np.random.Generator, int, np.ndarray], np.ndarray] | None = None
    span_fns: tuple[Callable[[np.ndarray], np.ndarray], ...] | None = None

    def __post_init__(self):
        if self.d < self.p:
            raise DomainError(f"model {self.name}: needs d >= p, got d={self.d} p={self.p}")
        if len(self.theta_box) != self.p:
            raise DomainError(f"model {self.name}: theta_box must have p={self.p} entries")

    def contains(self, theta) -> bool:
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        if th.size != self.p:
            return False
        return all(lo <= v <= hi for v, (lo, hi) in zip(th, self.theta_box))

    def h_at(self, theta, x: np.ndarray) -> np.ndarray:
        """h evaluated at (theta, x) as a (d, len(x)) array."""
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        out = np.atleast_2d(np.asarray(self.h(th, np.asarray(x, dtype=float)), dtype=float))
        return out


@dataclass(frozen=True)
class ThetaPrior:
    """Prior for the finite-dimensional parameter."""

    log_density: Callable[[np.ndarray], float]
    sampler: Callable[[np.random.Generator], np.ndarray]
    kind: str = "custom"

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "ThetaPrior":
        if not hi > lo:
            raise DomainError(f"uniform prior needs lo < hi, got ({lo}, {hi})")
        logc = -math.log(hi - lo)

        def logpdf(theta):
            t = float(np.atleast_1d(theta)[0])
            return logc if lo <= t <= hi else -math.inf

        return cls(log_density=logpdf,
                   sampler=lambda rng: np.array([rng.uniform(lo, hi)]),
                   kind="uniform")


def evaluate_h_matrix(model: MomentModel, theta, grid: Grid) -> np.ndarray:
    """Evaluate the moment functions on a grid, row j = h_j(theta, x_i).

    Raises a domain error for theta outside the box and an evaluation error
    (with the offending row/column) for non-finite values.
    """
    if not model.contains(theta):
        raise DomainError(f"theta={theta} outside the parameter box of {model.name}")
    mat = model.h_at(theta, grid.points)
    if mat.shape != (model.d, grid.size):
        raise EvaluationError(
            f"h returned shape {mat.shape}, expected {(model.d, grid.size)}"
        )
    if not np.all(np.isfinite(mat)):
        j, i = np.argwhere(~np.isfinite(mat))[0]
        raise EvaluationError(
            f"h_{j}(theta, x) non-finite at grid point {i} (x={grid.points[i]:g})"
        )
    return mat


def numeric_dh_dtheta(model: MomentModel, theta, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central finite-difference Jacobian of h in theta, shape (d, p, len(x))."""
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    x = np.asarray(x, dtype=float)
    out = np.empty((model.d, th.size, x.size))
    for k in range(th.size):
        tp, tm = th.copy(), th.copy()
        tp[k] += eps
        tm[k] -= eps
        out[:, k, :] = (model.h_at(tp, x) - model.h_at(tm, x)) / (2 * eps)
    return out


# ---------------------------------------------------------------------------
# built-in models
# ---------------------------------------------------------------------------

def _simulate_normal(rng: np.random.Generator, n: int, theta) -> np.ndarray:
    return rng.normal(float(np.atleast_1d(theta)[0]), 1.0, n)


def _simulate_truncated_normal(rng: np.random.Generator, n: int, theta) -> np.ndarray:
    # standard normal conditioned on [-1, 1] via inverse cdf; this DGP has
    # mean 0 by symmetry, so it only matches the moment model at theta = 0
    if abs(float(np.atleast_1d(theta)[0])) > 1e-12:
        raise DomainError("the truncated-normal study fixes the true mean at 0")
    u = rng.uniform(size=n)
    lo, hi = ndtr(-1.0), ndtr(1.0)
    return ndtri(lo + u * (hi - lo))


def _simulate_exponential(rng: np.random.Generator, n: int, theta) -> np.ndarray:
    return rng.exponential(scale=float(np.atleast_1d(theta)[0]), size=n)


def _h_mean(theta, x):
    return (x - theta[0])[None, :]


def _dh_mean(theta, x):
    return np.full((1, 1, x.size), -1.0)


def _h_exponential(theta, x):
    t = theta[0]
    return np.vstack([x - t, 2.0 * t * t - x * x])


def _dh_exponential(theta, x):
    t = theta[0]
    out = np.empty((2, 1, x.size))
    out[0, 0] = -1.0
    out[1, 0] = 4.0 * t
    return out


def builtin_models() -> dict[str, MomentModel]:
    """Catalog of the three simulation-study models.

    * ``mean_gaussian``      -- population mean on the real line, N(1,1) DGP
    * ``mean_truncated``     -- population mean on [-1,1], truncated N(0,1) DGP
    * ``exponential_overid`` -- mean of an exponential via the two moments
      E[X] = theta and E[X^2] = 2 theta^2 (overidentified, d=2 > p=1)
    """
    const = lambda x: np.ones_like(x)
    ident = lambda x: x
    square = lambda x: x * x
    return {
        "mean_gaussian": MomentModel(
            name="mean_gaussian",
            h=_h_mean, d=1, p=1,
            theta_box=((-10.0, 10.0),),
            support=(-math.inf, math.inf),
            dh_dtheta=_dh_mean,
            simulate=_simulate_normal,
            span_fns=(const, ident),
        ),
        "mean_truncated": MomentModel(
            name="mean_truncated",
            h=_h_mean, d=1, p=1,
            theta_box=((-1.0, 1.0),),
            support=(-1.0, 1.0),
            dh_dtheta=_dh_mean,
            simulate=_simulate_truncated_normal,
            span_fns=(const, ident),
        ),
        "exponential_overid": MomentModel(
            name="exponential_overid",
            h=_h_exponential, d=2, p=1,
            theta_box=((0.05, 20.0),),
            support=(0.0, math.inf),
            dh_dtheta=_dh_exponential,
            simulate=_simulate_exponential,
            span_fns=(const, ident, square),
        ),
    }


def get_model(name: str) -> MomentModel:
    models = builtin_models()
    if name not in models:
        raise DomainError(f"unknown model {name!r}; available: {sorted(models)}")
    return models[name]


def data_grid_bounds(model: MomentModel, data: np.ndarray) -> tuple[float, float]:
    """Grid bounds: the model support when compact, else data range +- 1."""
    lo, hi = model.support
    if math.isfinite(lo) and math.isfinite(hi):
        return (lo, hi)
    return (float(np.min(data)) - 1.0, float(np.max(data)) + 1.0)
