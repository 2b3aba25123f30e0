"""Marginal log-posterior evaluators for the finite-dimensional parameter.

Four evaluation paths share one engine:

``svd``
    The operator route: singular values of the whitened, covariance-scaled
    forward map drive the weights and the log-determinant, while the data
    misfit terms are evaluated through the sample-average identity (the
    inner products against inverse-adjoint images of the basis reduce to
    n^{-1} sum_i phi_j(x_i) minus the model-implied coefficient).  The
    misfit realization matters: whitening the misfit with the regularized
    inverse covariance on a quadrature grid amplifies grid-versus-sample
    null-space mismatch by a factor of n and destroys the invariance of the
    posterior to the dominating measure, whereas the sample-average form is
    exact under the empirical convention and measure-robust in general.

``basis``
    The simplified form valid under the empirical (sample-average)
    convention, where whitening collapses entirely and the eigenvalues are
    the prior's own.

``cu_gmm``
    The diffuse-prior limit: a continuously-updated GMM quadratic in the
    uncentered second-moment metric.

``conjugate``
    Closed-form Gaussian conditioning for the just-identified linear
    functional case (no MCMC involved); exposed through the standalone
    functions below rather than the per-theta evaluator.

The constraint-block misfit ("GMM block") orthonormalizes the moment
functions alone in the empirical second-moment metric, which makes the
diffuse limit agree with the continuously-updated GMM objective exactly;
orthonormalizing (1, h) jointly would instead produce the centered-metric
variant, a monotone transform of the same objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigError, DomainError, EvaluationError, SingularSystem
from .grids import DiscreteSpace, GridFn
from .gp_prior import ConstrainedGpPrior, PriorFamily
from .models import MomentModel, ThetaPrior, numeric_dh_dtheta
from .transform import SampleTransform

PATHS = ("svd", "basis", "cu_gmm")


def sym_inv_sqrt(A: np.ndarray, clip_rel: float = 1e-12) -> np.ndarray:
    """Inverse square root of a symmetric PSD matrix via eigendecomposition.

    Eigenvalues below ``clip_rel`` times the largest are treated as zero and
    pseudo-inverted (dropped), so rank-deficient covariances are handled
    without additive regularization.
    """
    evals, evecs = np.linalg.eigh(np.asarray(A, dtype=float))
    top = float(evals[-1])
    if top <= 0:
        raise SingularSystem("matrix has no positive eigenvalues")
    inv = np.where(evals > clip_rel * top, 1.0 / np.sqrt(np.maximum(evals, 1e-300)), 0.0)
    return (evecs * inv) @ evecs.T


@dataclass(frozen=True)
class EuclidOps:
    """Euclidean (weight-symmetrized) representations of one transform."""

    su: np.ndarray
    sx: np.ndarray
    Kt: np.ndarray
    rt: np.ndarray
    R: np.ndarray

    @classmethod
    def from_transform(cls, st: SampleTransform, clip_rel: float = 1e-12) -> "EuclidOps":
        su = np.sqrt(st.t_weights)
        w = st.x_space.weights
        if np.any(w <= 0):
            raise DomainError("engine requires strictly positive quadrature weights")
        sx = np.sqrt(w)
        Kt = (su[:, None] * st.K) / sx[None, :]
        rt = su * st.r_n
        R = sym_inv_sqrt(st.Sigma, clip_rel)
        return cls(su=su, sx=sx, Kt=Kt, rt=rt, R=R)


@dataclass(frozen=True)
class SvdSystem:
    """Singular system of the whitened forward map restricted to the prior.

    ``t_functions`` (one column per j) live on the transform's t side and
    ``x_functions`` on the x side; both are orthonormal in their quadrature
    inner products.
    """

    singular_values: np.ndarray
    t_functions: np.ndarray
    x_functions: np.ndarray


def compute_svd_system(st: SampleTransform, prior: ConstrainedGpPrior,
                       ops: EuclidOps | None = None) -> SvdSystem:
    if ops is None:
        ops = EuclidOps.from_transform(st)
    lam = prior.eigenvalues
    pos = lam > 0
    Bt = prior.basis.values[pos] * ops.sx[None, :]
    C = ops.R @ (ops.Kt @ (Bt.T * np.sqrt(lam[pos])[None, :]))
    U, sv, WT = np.linalg.svd(C, full_matrices=False)
    su_safe = np.where(ops.su > 0, ops.su, 1.0)
    t_fns = np.where(ops.su[:, None] > 0, U / su_safe[:, None], 0.0)
    x_fns = (Bt.T @ WT.T) / ops.sx[:, None]
    return SvdSystem(singular_values=sv, t_functions=t_fns, x_functions=x_fns)


def _gmm_block(model: MomentModel, theta, data: np.ndarray,
               f0: np.ndarray | None = None,
               space: DiscreteSpace | None = None) -> np.ndarray:
    """Misfit coordinates sqrt(n) V_n^{-1/2} (hbar - <f0, h>).

    V_n is the uncentered empirical second moment of the moment functions;
    with a constraint-projected prior mean the second term vanishes and the
    squared norm is exactly n times the continuously-updated GMM quadratic.
    """
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    H = model.h_at(th, data)
    n = data.size
    V = (H @ H.T) / n
    try:
        L = np.linalg.cholesky(V)
    except np.linalg.LinAlgError:
        raise EvaluationError(f"singular moment second-moment matrix at theta={th}")
    hbar = H.mean(axis=1)
    if f0 is not None:
        if space is None:
            raise DomainError("projected-mean misfit needs the prior's space")
        Hs = model.h_at(th, space.points)
        hbar = hbar - (Hs * space.weights) @ f0
    return math.sqrt(n) * np.linalg.solve(L, hbar)


def _positive_misfit(prior: ConstrainedGpPrior, data: np.ndarray,
                     basis_at_data: np.ndarray | None = None) -> np.ndarray:
    """sqrt(n) (phibar_j - m_j) over the positive-eigenvalue directions."""
    lam = prior.eigenvalues
    pos = lam > 0
    if basis_at_data is None:
        basis_at_data = prior.basis.eval_at(np.asarray(data, dtype=float))
    phibar = basis_at_data[pos].mean(axis=1)
    m = (prior.basis.values[pos] * prior.space.weights) @ prior.prior_mean
    return math.sqrt(data.size) * (phibar - m)


def _assemble(sv2: np.ndarray, z_pos: np.ndarray, z_gmm: np.ndarray, n: int) -> float:
    denom = 1.0 + n * sv2
    return float(
        -0.5 * np.sum(np.log(denom))
        - 0.5 * np.sum(z_pos**2 / denom)
        - 0.5 * np.sum(z_gmm**2)
    )


def log_lik_svd(st: SampleTransform, prior: ConstrainedGpPrior, theta=None,
                ops: EuclidOps | None = None,
                svd: SvdSystem | None = None,
                basis_at_data: np.ndarray | None = None,
                model: MomentModel | None = None) -> float:
    """Operator-route log likelihood (up to theta-free constants).

    ``theta`` defaults to the prior's conditioning point.  The singular
    values come from the covariance-whitened forward map; misfits use the
    sample-average identity (see the module docstring for why).
    """
    if theta is None:
        theta = prior.theta
    if svd is None:
        svd = compute_svd_system(st, prior, ops)
    sv = svd.singular_values
    n_pos = int(np.sum(prior.eigenvalues > 0))
    sv2 = np.zeros(n_pos)
    sv2[: sv.size] = sv[:n_pos] ** 2
    z_pos = _positive_misfit(prior, st.data, basis_at_data)
    if model is None:
        raise DomainError("log_lik_svd needs the moment model for the GMM block")
    z_gmm = _gmm_block(model, theta, st.data, prior.prior_mean, prior.space)
    value = _assemble(sv2, z_pos, z_gmm, st.n)
    if not np.isfinite(value):
        raise EvaluationError(f"non-finite log likelihood at theta={theta}")
    return value


def log_lik_basis(data: np.ndarray, prior: ConstrainedGpPrior, theta=None,
                  mean_vector: np.ndarray | None = None,
                  model: MomentModel | None = None) -> float:
    """Simplified (sample-average convention) log likelihood.

    Requires the prior's basis to be orthonormal under the empirical
    measure of ``data``; the eigenvalues then play the singular values'
    role directly.  ``mean_vector`` optionally supplies the coefficients
    <f0, phi_j> over the positive directions (computed from the prior mean
    otherwise).
    """
    data = np.asarray(data, dtype=float)
    space = prior.space
    if space.size != data.size or not np.allclose(space.points, np.sort(data)):
        raise ConfigError(
            "basis path needs the empirical convention: the prior must be "
            "built on the data points with sample-average inner products")
    if theta is None:
        theta = prior.theta
    lam = prior.eigenvalues
    pos = lam > 0
    B = prior.basis.values
    n = data.size
    phibar = B[pos] @ space.weights
    if mean_vector is None:
        mean_vector = (B[pos] * space.weights) @ prior.prior_mean
    z_pos = math.sqrt(n) * (phibar - np.asarray(mean_vector, dtype=float))
    if model is None:
        raise DomainError("log_lik_basis needs the moment model for the GMM block")
    z_gmm = _gmm_block(model, theta, data, prior.prior_mean, space)
    value = _assemble(lam[pos], z_pos, z_gmm, n)
    if not np.isfinite(value):
        raise EvaluationError(f"non-finite log likelihood at theta={theta}")
    return value


def log_quasi_lik_cu_gmm(data: np.ndarray, model: MomentModel, theta) -> float:
    """Diffuse-limit quasi log likelihood (continuously-updated GMM).

    -(1/2) (n^{-1/2} sum_i h)' V_n(theta)^{-1} (n^{-1/2} sum_i h) with
    V_n the uncentered empirical second moment of the moment functions.
    """
    z = _gmm_block(model, theta, np.asarray(data, dtype=float))
    return float(-0.5 * np.sum(z**2))


# ---------------------------------------------------------------------------
# Gaussian conditioning (just-identified linear functional case)
# ---------------------------------------------------------------------------

def _euclid_cov(Omega: np.ndarray, sx: np.ndarray) -> np.ndarray:
    Ot = sx[:, None] * np.asarray(Omega, dtype=float) / sx[None, :]
    return 0.5 * (Ot + Ot.T)


def conjugate_linear_posterior(f0, Omega: np.ndarray, st: SampleTransform, g) -> tuple[float, float]:
    """Posterior mean and variance of the linear functional <f, g>.

    Works on the joint Gaussian of (f, r_n): the functional's posterior is
    Normal with mean <f0 + A (r_n - K f0), g> and variance
    <(Omega - A K Omega) g, g>, A = Omega K* (Sigma/n + K Omega K*)^{-1}.
    ``Omega`` is the value-representation covariance operator (as returned
    by ``ConstrainedGpPrior.covariance_operator``).
    """
    f0 = f0.values if isinstance(f0, GridFn) else np.asarray(f0, dtype=float)
    g = g.values if isinstance(g, GridFn) else np.asarray(g, dtype=float)
    ops = EuclidOps.from_transform(st)
    Ot = _euclid_cov(Omega, ops.sx)
    f0t = f0 * ops.sx
    gt = g * ops.sx
    C = st.Sigma / st.n + ops.Kt @ Ot @ ops.Kt.T
    try:
        cf = cho_factor(C)
    except np.linalg.LinAlgError:
        raise SingularSystem(
            "posterior system is singular; enable covariance regularization")
    KO = ops.Kt @ Ot
    mean = float(f0t @ gt + (KO.T @ cho_solve(cf, ops.rt - ops.Kt @ f0t)) @ gt)
    var = float(gt @ Ot @ gt - (KO @ gt) @ cho_solve(cf, KO @ gt))
    return mean, max(var, 0.0)


def conditional_posterior_f(prior: ConstrainedGpPrior, st: SampleTransform) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian conditional of the density given the transform.

    Returns the posterior mean values and the pointwise posterior
    covariance matrix Cov(f(x_i), f(x_j)).  The conditioning leaves the
    degenerate directions untouched, so the posterior mean still satisfies
    the mass and moment constraints.
    """
    ops = EuclidOps.from_transform(st)
    lam = prior.eigenvalues
    Bt = prior.basis.values * ops.sx[None, :]
    Ot = Bt.T @ (lam[:, None] * Bt)
    f0t = prior.prior_mean * ops.sx
    C = st.Sigma / st.n + ops.Kt @ Ot @ ops.Kt.T
    try:
        cf = cho_factor(C)
    except np.linalg.LinAlgError:
        raise SingularSystem(
            "posterior system is singular; enable covariance regularization")
    KO = ops.Kt @ Ot
    mean_t = f0t + KO.T @ cho_solve(cf, ops.rt - ops.Kt @ f0t)
    cov_t = Ot - KO.T @ cho_solve(cf, KO)
    inv_sx = 1.0 / ops.sx
    mean = mean_t * inv_sx
    cov = inv_sx[:, None] * cov_t * inv_sx[None, :]
    return mean, 0.5 * (cov + cov.T)


# ---------------------------------------------------------------------------
# asymptotic information
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AsymptoticInfo:
    """Efficient information matrix and the implied posterior-sd prediction."""

    info: np.ndarray
    posterior_sd_pred: np.ndarray | None


def asymptotic_information(model: MomentModel, theta, n: int | None = None,
                           data: np.ndarray | None = None,
                           moments: tuple[np.ndarray, np.ndarray] | None = None) -> AsymptoticInfo:
    """G' V^{-1} G with G = E[dh/dtheta] and V = E[h h'].

    ``moments`` supplies (G, V) analytically; otherwise both are estimated
    by sample averages over ``data`` (using the model's Jacobian when
    available, central differences when not).  The predicted posterior
    standard deviation sqrt(diag(info^{-1}))/sqrt(n) is attached when a
    sample size is given.
    """
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    if moments is not None:
        G, V = (np.asarray(m, dtype=float) for m in moments)
        G = G.reshape(model.d, model.p)
    elif data is not None:
        data = np.asarray(data, dtype=float)
        if model.dh_dtheta is not None:
            jac = np.asarray(model.dh_dtheta(th, data), dtype=float)
        else:
            jac = numeric_dh_dtheta(model, th, data)
        G = jac.mean(axis=2).reshape(model.d, model.p)
        H = model.h_at(th, data)
        V = (H @ H.T) / data.size
    else:
        raise DomainError("asymptotic_information needs moments or data")
    try:
        Vi_G = np.linalg.solve(V, G)
    except np.linalg.LinAlgError:
        raise EvaluationError("E[h h'] is singular; information undefined")
    info = G.T @ Vi_G
    info = 0.5 * (info + info.T)
    sd = None
    if n is not None:
        sd = np.sqrt(np.diag(np.linalg.inv(info))) / math.sqrt(n)
    return AsymptoticInfo(info=info, posterior_sd_pred=sd)


# ---------------------------------------------------------------------------
# the engine
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogPosterior:
    """Log posterior density of theta up to an additive constant."""

    evaluator: Callable[[np.ndarray], float]
    path: str

    def __call__(self, theta) -> float:
        return self.evaluator(theta)


class PosteriorEngine:
    """Caches everything theta-free and evaluates log posteriors quickly.

    Immutable after construction; concurrent evaluation only reads shared
    matrices, so chains and grid scans can share one engine.
    """

    def __init__(self, model: MomentModel, data: np.ndarray,
                 theta_prior: ThetaPrior, path: str = "svd",
                 st: SampleTransform | None = None,
                 prior_family: PriorFamily | None = None):
        if path not in PATHS:
            raise ConfigError(f"posterior path must be one of {PATHS}")
        self.model = model
        self.data = np.asarray(data, dtype=float)
        self.theta_prior = theta_prior
        self.path = path
        self.st = st
        self.prior_family = prior_family
        self._ops = None
        self._svd_cached = None
        self._basis_at_data = None

        if path in ("svd", "basis"):
            if prior_family is None:
                raise ConfigError(f"path {path!r} needs a prior family")
            if path == "svd" and st is None:
                raise ConfigError("svd path needs a sample transform")
            if path == "basis":
                sp = prior_family.space
                if sp.size != self.data.size or not np.allclose(
                        sp.points, np.sort(self.data)):
                    raise ConfigError(
                        "basis path requires the empirical convention "
                        "(prior built on the data points)")
            if path == "svd":
                self._ops = EuclidOps.from_transform(st)
            if prior_family.theta_free:
                basis = prior_family.shared_basis
                self._basis_at_data = basis.eval_at(np.sort(self.data))
                if path == "svd":
                    probe = prior_family.at(self._mid_theta())
                    self._svd_cached = compute_svd_system(st, probe, self._ops)

    def _mid_theta(self) -> np.ndarray:
        box = self.model.theta_box
        return np.array([0.5 * (lo + hi) if np.isfinite(lo) and np.isfinite(hi)
                         else 0.0 for lo, hi in box])

    def log_likelihood(self, theta) -> float:
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        if self.path == "cu_gmm":
            return log_quasi_lik_cu_gmm(self.data, self.model, th)
        prior = self.prior_family.at(th)
        if self.path == "basis":
            return log_lik_basis(self.data, prior, th, model=self.model)
        svd = self._svd_cached
        if svd is None:
            svd = compute_svd_system(self.st, prior, self._ops)
        return log_lik_svd(self.st, prior, th, ops=self._ops, svd=svd,
                           basis_at_data=self._basis_at_data, model=self.model)

    def log_posterior(self, theta) -> float:
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        if not self.model.contains(th):
            return -math.inf
        lp = self.theta_prior.log_density(th)
        if not np.isfinite(lp):
            return -math.inf
        return self.log_likelihood(th) + lp

    def as_log_posterior(self) -> LogPosterior:
        return LogPosterior(evaluator=self.log_posterior, path=self.path)
