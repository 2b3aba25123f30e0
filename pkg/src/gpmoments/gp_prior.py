"""Moment-constrained Gaussian process priors on the density.

Given theta, the conditional prior for the density f is Gaussian with a mean
that integrates to one and annihilates the moment functions, and a covariance
operator whose null space contains the constant and every moment function.
Draws from such a prior integrate to one and satisfy the estimating
equations exactly, which is the whole point of the construction.

The covariance is built spectrally: the first d+1 eigenfunctions are an
orthonormal basis of span{1, h_1(theta,.), ..., h_d(theta,.)} with eigenvalue
zero; the remaining eigenfunctions complete the basis from a polynomial
family and carry a summable decaying eigenvalue sequence.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.special import betaln

from .errors import ConfigError, DomainError
from .grids import (DiscreteSpace, Grid, GridFn, Measure, OrthoBasis,
                    _orthonormalize, orthonormal_basis)
from .models import MomentModel
from .transform import SampleTransform


@dataclass(frozen=True)
class EigenSpec:
    """Eigenvalue sequence specification for the prior covariance.

    ``polynomial`` decay uses lambda_j = j**(-alpha) with alpha > 1 and
    ``geometric`` uses lambda_j = a**j with 0 < a < 1, both indexed by basis
    position and scaled by sigma0 and the diffuseness multiplier c.
    """

    kind: str = "polynomial"
    alpha: float = 1.7
    a: float = 0.5
    sigma0: float = 1.0
    c: float = 1.0
    J: int = 300

    def __post_init__(self):
        if self.kind not in ("polynomial", "geometric"):
            raise DomainError(f"unknown eigenvalue kind {self.kind!r}")
        if self.kind == "polynomial" and not self.alpha > 1:
            raise DomainError("polynomial decay needs alpha > 1 for summability")
        if self.kind == "geometric" and not (0 < self.a < 1):
            raise DomainError("geometric decay needs 0 < a < 1")
        if self.sigma0 <= 0 or self.c <= 0:
            raise DomainError("sigma0 and c must be positive")

    def decay(self, j: np.ndarray) -> np.ndarray:
        j = np.asarray(j, dtype=float)
        if self.kind == "polynomial":
            return np.maximum(j, 1.0) ** (-self.alpha)
        return self.a**j

    def eigenvalues(self, d: int) -> np.ndarray:
        """Length-J vector, zero through index d, scaled decay beyond."""
        if self.J <= d + 1:
            raise DomainError(f"J={self.J} must exceed d+1={d + 1}")
        lam = np.zeros(self.J)
        idx = np.arange(d + 1, self.J)
        lam[idx] = self.c * self.sigma0 * self.decay(idx)
        if lam[-1] > 1e-3 * lam[d + 1]:
            warnings.warn(
                f"truncation leaves lambda_J/lambda_first = {lam[-1] / lam[d + 1]:.2e} "
                "> 1e-3; consider a larger J", stacklevel=2)
        return lam


@dataclass(frozen=True)
class ConstraintBlock:
    """Orthonormalized (1, h_1, ..., h_d) with the change-of-basis data.

    ``L`` satisfies raw = L @ block (lower triangular from Gram-Schmidt) and
    ``v = L^{-1} e_1`` is the coefficient vector pinning the constraint
    values <f, 1> = 1 and <f, h_j> = 0.
    """

    values: np.ndarray
    L: np.ndarray
    v: np.ndarray
    theta: np.ndarray


def constraint_block(model: MomentModel, theta, space: DiscreteSpace) -> ConstraintBlock:
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    raw = np.vstack([np.ones(space.size), model.h_at(th, space.points)])
    block, _ = _orthonormalize(raw, space.weights)
    L = (raw * space.weights) @ block.T
    e1 = np.zeros(model.d + 1)
    e1[0] = 1.0
    v = np.linalg.solve(L, e1)
    return ConstraintBlock(values=block, L=L, v=v, theta=th)


def project_onto_constraints(values: np.ndarray, block: ConstraintBlock,
                             space: DiscreteSpace) -> np.ndarray:
    """Closest (in the weighted norm) function meeting the constraints.

    Affine projection onto {f : <f,1> = 1, <f,h_j> = 0}: shift the block
    coefficients to the target vector v, leave the orthogonal complement
    untouched.
    """
    coef = block.v - (block.values * space.weights) @ values
    return values + block.values.T @ coef


@dataclass(frozen=True)
class ConstrainedGpPrior:
    """Degenerate GP prior at a fixed theta.

    ``basis.values`` rows 0..d span {1, h(theta,.)} and carry eigenvalue
    zero.  Two covariance views exist: :meth:`covariance_operator` is the
    quadrature-weighted matrix acting on value vectors (it annihilates the
    constraint directions), while :meth:`covariance_kernel` is the pointwise
    covariance Cov(f(x_i), f(x_j)) matching the sample variance of draws.
    """

    basis: OrthoBasis
    eigenvalues: np.ndarray
    prior_mean: np.ndarray
    space: DiscreteSpace
    theta: np.ndarray
    d: int
    measure: Measure | None = None
    block: ConstraintBlock | None = None

    @property
    def J(self) -> int:
        return self.eigenvalues.size

    def covariance_kernel(self) -> np.ndarray:
        B = self.basis.values
        return B.T @ (self.eigenvalues[:, None] * B)

    def covariance_operator(self) -> np.ndarray:
        B = self.basis.values
        return B.T @ (self.eigenvalues[:, None] * (B * self.space.weights))

    def mean_fn(self, grid: Grid) -> GridFn:
        return GridFn(values=self.prior_mean, grid=grid)


def sample_prior(prior: ConstrainedGpPrior, rng: np.random.Generator) -> np.ndarray:
    """One draw via the truncated Karhunen-Loeve expansion.

    f = f0 + sum_{j>d} sqrt(lambda_j) xi_j phi_j with iid standard normal
    xi; every draw satisfies the mass and moment constraints up to roundoff
    because the excited directions are orthogonal to the constraint block.
    """
    lam = prior.eigenvalues
    pos = lam > 0
    xi = rng.standard_normal(int(pos.sum()))
    return prior.prior_mean + prior.basis.values[pos].T @ (np.sqrt(lam[pos]) * xi)


# ---------------------------------------------------------------------------
# prior mean strategies
# ---------------------------------------------------------------------------

class SeriesMean:
    """f0 = 1 + sum_{j>d} a_j phi_j over the completed basis."""

    name = "series"

    def __init__(self, coeffs: Mapping[int, float] | Sequence[float] | None = None):
        self.coeffs = coeffs

    def raw_values(self, ctx: "MeanContext") -> np.ndarray:
        return prior_mean_series(ctx.basis, self.coeffs, ctx.d)


class BetaMean:
    """Beta-shaped mean on [-1, 1] whose first moment equals theta."""

    name = "beta"

    def __init__(self, q: float = 2.0):
        if q <= 0:
            raise DomainError("beta mean needs q > 0")
        self.q = q

    def raw_values(self, ctx: "MeanContext") -> np.ndarray:
        return prior_mean_beta(float(ctx.theta[0]), self.q, ctx.space.points)


class TwoStepMean:
    """Tikhonov pilot fit of the density, projected per theta downstream."""

    name = "two_step"

    def __init__(self, st: SampleTransform, reg: float = 0.1):
        if reg <= 0:
            raise DomainError("two-step pilot needs a positive ridge")
        self.st = st
        self.reg = reg
        self._pilot: np.ndarray | None = None

    def pilot(self) -> np.ndarray:
        if self._pilot is None:
            K, K_adj = self.st.K, self.st.K_adj
            A = self.reg * np.eye(K.shape[1]) + K_adj @ K
            self._pilot = np.linalg.solve(A, K_adj @ self.st.r_n)
        return self._pilot

    def raw_values(self, ctx: "MeanContext") -> np.ndarray:
        return self.pilot()


class FunctionMean:
    """Explicit mean x -> f0theta(x); useful for custom studies and tests."""

    name = "function"

    def __init__(self, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]):
        self.fn = fn

    def raw_values(self, ctx: "MeanContext") -> np.ndarray:
        return np.asarray(self.fn(ctx.theta, ctx.space.points), dtype=float)


@dataclass(frozen=True)
class MeanContext:
    theta: np.ndarray
    space: DiscreteSpace
    basis: OrthoBasis
    d: int


def prior_mean_series(basis: OrthoBasis, coeffs, d: int) -> np.ndarray:
    """1 + sum_{j>d} a_j phi_j; warns when the boundedness budget is blown.

    The sum-of-|a_j| x sup|phi_j| <= 1 rule keeps the mean safely positive;
    violating it is allowed (non-negativity is not guaranteed anyway) but
    flagged.
    """
    out = np.ones(basis.space.size)
    if coeffs is None:
        return out
    if isinstance(coeffs, Mapping):
        items = sorted(coeffs.items())
    else:
        items = [(d + 1 + i, float(a)) for i, a in enumerate(coeffs)]
    budget = 0.0
    for j, a in items:
        if not d < j < basis.size:
            raise DomainError(f"series coefficient index {j} outside (d, J)")
        out += a * basis.values[j]
        budget += abs(a) * float(np.abs(basis.values[j]).max())
    if budget > 1.0 + 1e-12:
        warnings.warn(
            f"series coefficients exceed the boundedness budget ({budget:.3f} > 1); "
            "the prior mean may go negative", stacklevel=2)
    return out


def prior_mean_beta(theta: float, q: float, points: np.ndarray) -> np.ndarray:
    """Beta(p_theta, q) density on [-1, 1] with mean exactly theta.

    p_theta = q (1 + theta) / (1 - theta) solves (p - q)/(p + q) = theta.
    Integrable boundary singularities (shape parameter below one) are
    replaced at the boundary nodes by the analytic half-cell average so the
    trapezoidal mass stays finite and close to one.
    """
    if not -1.0 < theta < 1.0:
        raise DomainError(f"beta mean needs theta strictly inside (-1, 1), got {theta}")
    p = q * (1.0 + theta) / (1.0 - theta)
    logc = -betaln(p, q) - (p + q - 1.0) * math.log(2.0)
    x = np.asarray(points, dtype=float)
    out = np.zeros(x.size)
    interior = (x > -1.0) & (x < 1.0)
    xi = x[interior]
    out[interior] = np.exp(logc + (p - 1.0) * np.log1p(xi) + (q - 1.0) * np.log1p(-xi))

    def endpoint(at_lower: bool, expo: float, other: float) -> float:
        # node value for base**(expo-1) at a boundary node, paired with the
        # other factor evaluated there; half-cell average when divergent
        if expo > 1.0:
            return 0.0
        if expo == 1.0:
            return math.exp(logc + (other - 1.0) * math.log(2.0))
        h = float(x[1] - x[0]) if x.size > 1 else 1e-3
        cell = (h / 2.0) ** expo / expo
        return (2.0 / h) * cell * math.exp(logc + (other - 1.0) * math.log(2.0))

    if x[0] <= -1.0:
        out[0] = endpoint(True, p, q)
    if x[-1] >= 1.0:
        out[-1] = endpoint(False, q, p)
    return out


def prior_mean_two_step(r_n: np.ndarray, K: np.ndarray, K_adj: np.ndarray,
                        model: MomentModel, theta, space: DiscreteSpace,
                        reg: float = 0.1) -> np.ndarray:
    """Data-driven mean: Tikhonov pilot, then affine constraint projection.

    The pilot solves (reg I + K* K) f = K* r_n in the value representation;
    the projection makes <f0,1> = 1 and <f0,h_j(theta,.)> = 0 exact in the
    quadrature arithmetic.
    """
    A = reg * np.eye(K.shape[1]) + K_adj @ K
    pilot = np.linalg.solve(A, K_adj @ np.asarray(r_n, dtype=float))
    block = constraint_block(model, theta, space)
    return project_onto_constraints(pilot, block, space)


# ---------------------------------------------------------------------------
# prior construction
# ---------------------------------------------------------------------------

def _basis_for(model: MomentModel, theta, space: DiscreteSpace, J: int,
               family, bounds) -> OrthoBasis:
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    seeds = [lambda x: np.ones_like(x)]
    for j in range(model.d):
        seeds.append(lambda x, j=j, th=th: model.h_at(th, x)[j])
    return orthonormal_basis(seeds, space, J, family=family, bounds=bounds)


def build_prior(
    model: MomentModel,
    theta,
    eigen: EigenSpec,
    measure: Measure | None = None,
    mean_strategy=None,
    family: str | Callable = "legendre",
    space: DiscreteSpace | None = None,
    basis: OrthoBasis | None = None,
) -> ConstrainedGpPrior:
    """Construct the constrained prior at one theta.

    The basis seeds are (1, h_1(theta,.), ..., h_d(theta,.)) in that order,
    completed from ``family``.  Whatever the mean strategy produces is
    projected onto the constraint set, so Restriction-type invariants hold
    at machine precision rather than at quadrature accuracy.

    Any precomputed ``basis`` must span the constraint block for this theta
    (the theta-free span of the built-in models); this is how a chain shares
    one completion across all its evaluations.
    """
    if space is None:
        if measure is None:
            raise DomainError("build_prior needs a measure or an explicit space")
        space = measure.space()
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    if not model.contains(th):
        raise DomainError(f"theta={theta} outside the parameter box of {model.name}")
    bounds = (float(space.points[0]), float(space.points[-1]))
    if basis is None:
        basis = _basis_for(model, th, space, eigen.J, family, bounds)
    lam = eigen.eigenvalues(model.d)
    block = constraint_block(model, th, space)
    if mean_strategy is None:
        mean_strategy = SeriesMean()
    ctx = MeanContext(theta=th, space=space, basis=basis, d=model.d)
    raw_mean = mean_strategy.raw_values(ctx)
    mean = project_onto_constraints(raw_mean, block, space)
    return ConstrainedGpPrior(
        basis=basis,
        eigenvalues=lam,
        prior_mean=mean,
        space=space,
        theta=th,
        d=model.d,
        measure=measure,
        block=block,
    )


class PriorFamily:
    """Per-theta prior factory that shares theta-free work across a chain.

    When the model exposes a theta-free constraint span, the completed
    basis (hence the covariance) is built once; only the constraint block
    and the projected mean are refreshed per theta.
    """

    def __init__(self, model: MomentModel, eigen: EigenSpec,
                 mean_strategy, family: str | Callable = "legendre",
                 measure: Measure | None = None,
                 space: DiscreteSpace | None = None):
        if space is None:
            if measure is None:
                raise ConfigError("PriorFamily needs a measure or a space")
            space = measure.space()
        self.model = model
        self.eigen = eigen
        self.mean_strategy = mean_strategy or SeriesMean()
        self.family = family
        self.measure = measure
        self.space = space
        self.bounds = (float(space.points[0]), float(space.points[-1]))
        self.lam = eigen.eigenvalues(model.d)
        self.shared_basis: OrthoBasis | None = None
        if model.span_fns is not None:
            self.shared_basis = orthonormal_basis(
                list(model.span_fns), space, eigen.J,
                family=family, bounds=self.bounds)

    @property
    def theta_free(self) -> bool:
        return self.shared_basis is not None

    def at(self, theta) -> ConstrainedGpPrior:
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        basis = self.shared_basis
        if basis is None:
            basis = _basis_for(self.model, th, self.space, self.eigen.J,
                               self.family, self.bounds)
        block = constraint_block(self.model, th, self.space)
        ctx = MeanContext(theta=th, space=self.space, basis=basis, d=self.model.d)
        mean = project_onto_constraints(
            self.mean_strategy.raw_values(ctx), block, self.space)
        return ConstrainedGpPrior(
            basis=basis, eigenvalues=self.lam, prior_mean=mean,
            space=self.space, theta=th, d=self.model.d,
            measure=self.measure, block=block)
