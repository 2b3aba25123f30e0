"""Sample transforms: the observable r_n, the operators K, K*, and Sigma.

The data enter the posterior through r_n(t) = (1/n) sum_i k(t, x_i) for a
kernel k chosen by the user (empirical cdf, moment generating function, or
characteristic function).  Conditionally on the density f, r_n is treated as
Gaussian with mean Kf and covariance Sigma/n, where K integrates against the
dominating measure and Sigma is the empirical covariance kernel of k(t, X).

Matrix conventions
------------------
``build_K`` and ``build_K_adjoint`` return "value representation" matrices:
they act on / produce vectors of function values, with quadrature weights
folded into the entries (trapezoidal step times measure density).  ``Sigma``
is stored in the symmetric representation sqrt(u_i) sigma(t_i,t_l) sqrt(u_l)
with u the rho-quadrature weights; this is similar to the value
representation (same spectrum, same operator) but symmetric positive
semi-definite, which is what the eigendecomposition-based square roots need.

The complex characteristic-function kernel is handled by stacking cos(tx)
and sin(tx) as two real rows per t, doubling the row count while keeping all
linear algebra real.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, EvaluationError
from .grids import DiscreteSpace, Grid, GridFn, Measure

KERNEL_KINDS = ("cdf", "mgf", "characteristic", "custom")


@dataclass(frozen=True)
class KernelTransform:
    """Kernel k(t, x) together with the t-side grid and measure rho."""

    kind: str
    t_grid: Grid
    rho: Measure
    k: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise DomainError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "custom" and self.k is None:
            raise DomainError("custom kernel requires an explicit k(t, x)")
        if self.rho.grid.size != self.t_grid.size:
            raise DomainError("rho must live on the transform's t grid")

    @property
    def n_rows(self) -> int:
        m = self.t_grid.size
        return 2 * m if self.kind == "characteristic" else m

    def rows(self, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Kernel matrix with one row per output coordinate.

        Shape (len(t), len(x)) for real kernels; for the characteristic kind
        the real and imaginary parts are stacked to (2 len(t), len(x)).
        """
        t = np.asarray(t, dtype=float)[:, None]
        x = np.asarray(x, dtype=float)[None, :]
        if self.kind == "cdf":
            out = (x <= t).astype(float)
        elif self.kind == "mgf":
            out = np.exp(t * x)
        elif self.kind == "characteristic":
            tx = t * x
            out = np.vstack([np.cos(tx), np.sin(tx)])
        else:
            out = np.atleast_2d(np.asarray(self.k(t, x), dtype=float))
        if not np.all(np.isfinite(out)):
            i, j = np.argwhere(~np.isfinite(out))[0]
            raise EvaluationError(f"kernel value non-finite at row {i}, column {j}")
        return out

    def row_weights(self) -> np.ndarray:
        """rho-quadrature weights per output row (duplicated when stacked)."""
        u = self.rho.weights()
        return np.concatenate([u, u]) if self.kind == "characteristic" else u


@dataclass
class SampleTransform:
    """Everything the posterior needs about the data summary.

    Holds r_n, the discretized operators, the (optionally regularized)
    covariance, and the raw sample; meant to be built once per data set and
    then shared read-only.
    """

    kernel: KernelTransform
    data: np.ndarray
    r_n: np.ndarray
    K: np.ndarray
    K_adj: np.ndarray
    Sigma: np.ndarray
    n: int
    regularized: bool
    x_space: DiscreteSpace
    t_weights: np.ndarray

    def rn_fn(self) -> GridFn:
        if self.r_n.size != self.kernel.t_grid.size:
            raise DomainError("r_n rows do not coincide with the t grid (stacked kernel)")
        return GridFn(values=self.r_n, grid=self.kernel.t_grid)


def compute_rn(kernel: KernelTransform, data: np.ndarray) -> np.ndarray:
    """Empirical transform r_n(t_i) = (1/n) sum_j k(t_i, x_j)."""
    data = np.asarray(data, dtype=float)
    if data.size == 0:
        raise DomainError("compute_rn requires at least one observation")
    return kernel.rows(kernel.t_grid.points, data).mean(axis=1)


def build_K(kernel: KernelTransform, x_grid: Grid, pi: Measure) -> np.ndarray:
    """Discretized forward operator, entry (i, j) = k(t_i, x_j) w_pi(x_j).

    Applying the matrix to a vector of function values approximates
    t -> integral k(t, x) phi(x) pi(dx) by the trapezoidal rule.
    """
    if pi.grid.size != x_grid.size:
        raise DomainError("pi must live on the x grid")
    rows = kernel.rows(kernel.t_grid.points, x_grid.points)
    return rows * pi.weights()[None, :]


def build_K_adjoint(kernel: KernelTransform, x_grid: Grid, rho: Measure | None = None) -> np.ndarray:
    """Discretized adjoint, entry (j, i) = k(t_i, x_j) w_rho(t_i).

    Built so that <K phi, psi>_rho = <phi, K* psi>_pi holds exactly in the
    quadrature inner products.  ``rho`` defaults to the kernel's own measure
    and must live on its t grid.
    """
    if rho is None:
        rho = kernel.rho
    if rho.grid.size != kernel.t_grid.size:
        raise DomainError("rho must live on the kernel's t grid")
    rows = kernel.rows(kernel.t_grid.points, x_grid.points)
    u = rho.weights()
    if kernel.kind == "characteristic":
        u = np.concatenate([u, u])
    return rows.T * u[None, :]


def build_sigma(kernel: KernelTransform, data: np.ndarray, t_grid: Grid, rho: Measure) -> np.ndarray:
    """Empirical covariance of the transform in symmetric representation.

    The covariance kernel sigma(t_i, t_l) = (1/n) sum_j k(t_i,x_j) k(t_l,x_j)
    - r_n(t_i) r_n(t_l) is weighted by sqrt(u_i u_l) with u the rho weights,
    which keeps the matrix symmetric PSD while representing the same
    operator as the one-sided rho weighting.
    """
    data = np.asarray(data, dtype=float)
    n = data.size
    if n < 2:
        raise DomainError("covariance needs at least two observations")
    rows = kernel.rows(t_grid.points, data)
    rn = rows.mean(axis=1)
    S = (rows / n) @ rows.T - np.outer(rn, rn)
    su = np.sqrt(kernel.row_weights())
    return su[:, None] * S * su[None, :]


def sigma_kernel(kernel: KernelTransform, data: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Unweighted covariance kernel sigma(t_i, t_l) on arbitrary t points."""
    data = np.asarray(data, dtype=float)
    rows = kernel.rows(np.asarray(t, dtype=float), data)
    rn = rows.mean(axis=1)
    return (rows / data.size) @ rows.T - np.outer(rn, rn)


def regularize_sigma(Sigma: np.ndarray, n: int) -> np.ndarray:
    """Tikhonov floor: Sigma + I/n (shifts every eigenvalue by 1/n)."""
    Sigma = np.asarray(Sigma, dtype=float)
    if Sigma.ndim != 2 or Sigma.shape[0] != Sigma.shape[1]:
        raise DomainError("regularize_sigma expects a square matrix")
    return Sigma + np.eye(Sigma.shape[0]) / n

REGULARIZE_MODES = ("auto", "always", "never")
# condition-number threshold for mode "auto"
_COND_LIMIT = 1e12


def build_sample_transform(
    kernel: KernelTransform,
    data: np.ndarray,
    x_space: DiscreteSpace,
    regularize: str = "auto",
    t_space: DiscreteSpace | None = None,
) -> SampleTransform:
    """Assemble r_n, K, K*, Sigma for one data set.

    ``x_space`` is either a quadrature measure's space or the empirical
    space of the data (sample-average convention).  Under the empirical
    convention the t side should be data-adapted as well: a uniform t grid
    cannot separate observations falling between its nodes, which breaks
    the exact Sigma = H H* factorization the simplified computations rely
    on.  Passing ``t_space`` (typically ``DiscreteSpace.empirical(data)``)
    overrides the kernel's own grid for all discretizations.
    """
    if regularize not in REGULARIZE_MODES:
        raise DomainError(f"regularize must be one of {REGULARIZE_MODES}")
    data = np.asarray(data, dtype=float)
    n = data.size
    if n < 2:
        raise DomainError("sample transform needs at least two observations")
    if t_space is None:
        t_points = kernel.t_grid.points
        u = kernel.rho.weights()
    else:
        t_points = t_space.points
        u = t_space.weights
    if kernel.kind == "characteristic":
        u = np.concatenate([u, u])

    rows_d = kernel.rows(t_points, data)
    rn = rows_d.mean(axis=1)
    S = (rows_d / n) @ rows_d.T - np.outer(rn, rn)
    su = np.sqrt(u)
    Sigma = su[:, None] * S * su[None, :]

    rows_x = kernel.rows(t_points, x_space.points)
    K = rows_x * x_space.weights[None, :]
    K_adj = rows_x.T * u[None, :]

    did_reg = False
    if regularize == "always":
        Sigma = regularize_sigma(Sigma, n)
        did_reg = True
    elif regularize == "auto":
        evals = np.linalg.eigvalsh(Sigma)
        top = float(evals[-1])
        bottom = float(evals[0])
        if top <= 0 or bottom < top / _COND_LIMIT:
            Sigma = regularize_sigma(Sigma, n)
            did_reg = True
    return SampleTransform(
        kernel=kernel,
        data=data,
        r_n=rn,
        K=K,
        K_adj=K_adj,
        Sigma=Sigma,
        n=n,
        regularized=did_reg,
        x_space=x_space,
        t_weights=u,
    )
