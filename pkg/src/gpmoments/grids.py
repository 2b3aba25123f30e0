"""Uniform grids, weighted trapezoidal quadrature and orthonormal bases.

This module is the discrete stand-in for the two L2 spaces the estimation
machinery lives in: functions are represented by their values on a uniform
grid, integrals by trapezoidal sums weighted with a measure density, and
orthonormal systems are produced by (re-orthogonalized) Gram-Schmidt in the
resulting weighted inner product.

An "empirical" discretization -- points at the observed sample with equal
weights 1/n, so that inner products are sample averages -- is supported
through :class:`DiscreteSpace`, which both :class:`Measure` and raw data can
be converted to.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateBasis, DimensionMismatch, DomainError

# Relative pivot threshold below which a Gram-Schmidt candidate is considered
# linearly dependent (double precision breakdown level).
DEPENDENCE_TOL = 1e-12


@dataclass(frozen=True)
class Grid:
    """Uniform 1-d grid with M >= 2 strictly increasing points."""

    points: np.ndarray
    step: float
    bounds: tuple[float, float]

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", pts)
        if pts.ndim != 1 or pts.size < 2:
            raise DomainError("grid needs at least 2 points in one dimension")
        if not np.all(np.diff(pts) > 0):
            raise DomainError("grid points must be strictly increasing")
        if self.step <= 0:
            raise DomainError("grid step must be positive")
        lo, hi = self.bounds
        if not (np.isclose(pts[0], lo) and np.isclose(pts[-1], hi)):
            raise DomainError("grid endpoints must match the stated bounds")

    @classmethod
    def uniform(cls, lo: float, hi: float, m: int) -> "Grid":
        if not hi > lo:
            raise DomainError(f"invalid bounds ({lo}, {hi})")
        if m < 2:
            raise DomainError("grid size must be at least 2")
        pts = np.linspace(lo, hi, m)
        return cls(points=pts, step=(hi - lo) / (m - 1), bounds=(lo, hi))

    @property
    def size(self) -> int:
        return self.points.size

    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.size, self.step)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w


@dataclass(frozen=True)
class Measure:
    """Density values of a positive measure on a :class:`Grid`."""

    density: np.ndarray
    grid: Grid

    def __post_init__(self):
        dens = np.asarray(self.density, dtype=float)
        object.__setattr__(self, "density", dens)
        if dens.shape != (self.grid.size,):
            raise DimensionMismatch(
                f"density has length {dens.size}, grid has {self.grid.size}"
            )
        if np.any(dens < 0) or not np.all(np.isfinite(dens)):
            raise DomainError("measure density must be finite and non-negative")

    @classmethod
    def lebesgue(cls, grid: Grid) -> "Measure":
        return cls(density=np.ones(grid.size), grid=grid)

    @classmethod
    def from_density(cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray]) -> "Measure":
        return cls(density=np.asarray(fn(grid.points), dtype=float), grid=grid)

    def weights(self) -> np.ndarray:
        """Quadrature weights: density times trapezoidal step weights."""
        return self.density * self.grid.trapezoid_weights()

    def space(self) -> "DiscreteSpace":
        return DiscreteSpace(points=self.grid.points, weights=self.weights())

    def total_mass(self) -> float:
        return float(np.sum(self.weights()))


@dataclass(frozen=True)
class GridFn:
    """A function sampled on a grid."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.shape != (self.grid.size,):
            raise DimensionMismatch(
                f"values have length {vals.size}, grid has {self.grid.size}"
            )


@dataclass(frozen=True)
class DiscreteSpace:
    """Evaluation points plus quadrature weights.

    Covers both the grid case (trapezoid-weighted measure density) and the
    empirical case (data points, weights 1/n, inner products are sample
    averages).
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if self.points.shape != self.weights.shape:
            raise DimensionMismatch("points and weights differ in length")

    @classmethod
    def empirical(cls, data: np.ndarray) -> "DiscreteSpace":
        data = np.sort(np.asarray(data, dtype=float))
        return cls(points=data, weights=np.full(data.size, 1.0 / data.size))

    @property
    def size(self) -> int:
        return self.points.size

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.sum(a * b * self.weights))

    def norm(self, a: np.ndarray) -> float:
        return float(np.sqrt(np.sum(a * a * self.weights)))


def inner_product(f: GridFn, g: GridFn, m: Measure) -> float:
    """Trapezoidal approximation of the weighted L2 inner product.

    Symmetric and bilinear; all three arguments must share one grid.
    """
    sizes = {f.values.size, g.values.size, m.density.size}
    if len(sizes) != 1:
        raise DimensionMismatch(
            "inner_product arguments live on different grids: lengths "
            f"{f.values.size}, {g.values.size}, {m.density.size}"
        )
    return float(np.sum(f.values * g.values * m.weights()))


def _orthonormalize(
    rows: np.ndarray,
    weights: np.ndarray,
    coeffs: np.ndarray | None = None,
    reorth: int = 2,
) -> tuple[np.ndarray, np.ndarray]:
    """Modified Gram-Schmidt with re-orthogonalization under given weights.

    Returns the orthonormal rows together with the transform matrix T such
    that output = T @ rows (coefficient tracking lets callers re-evaluate the
    orthonormal functions at arbitrary points).

    Raises :class:`DegenerateBasis` when a pivot falls below DEPENDENCE_TOL
    relative to the input norm.
    """
    rows = np.asarray(rows, dtype=float)
    k, m = rows.shape
    if coeffs is None:
        coeffs = np.eye(k)
    out = np.empty((k, m))
    out_c = np.empty((k, coeffs.shape[1]))
    for i in range(k):
        u = rows[i].copy()
        cu = coeffs[i].copy()
        n0 = np.sqrt(np.sum(u * u * weights))
        for _ in range(reorth):
            if i:
                proj = out[:i] @ (u * weights)
                u -= proj @ out[:i]
                cu -= proj @ out_c[:i]
        nv = np.sqrt(np.sum(u * u * weights))
        if not np.isfinite(nv) or nv < DEPENDENCE_TOL * max(n0, 1e-300):
            raise DegenerateBasis(
                f"vector {i} is numerically dependent on its predecessors "
                f"(pivot {nv:.3e} vs input norm {n0:.3e})"
            )
        out[i] = u / nv
        out_c[i] = cu / nv
    return out, out_c


def gram_schmidt(vectors: Sequence[GridFn], m: Measure) -> list[GridFn]:
    """Orthonormalize vectors in the quadrature inner product of ``m``.

    Order-preserving: output j is a combination of inputs 0..j.
    """
    if not vectors:
        return []
    grid = vectors[0].grid
    rows = np.vstack([v.values for v in vectors])
    if rows.shape[1] != m.density.size:
        raise DimensionMismatch(
            f"vectors have length {rows.shape[1]}, measure has {m.density.size}"
        )
    out, _ = _orthonormalize(rows, m.weights())
    return [GridFn(values=row, grid=grid) for row in out]


# ---------------------------------------------------------------------------
# candidate families for basis completion
# ---------------------------------------------------------------------------

FAMILIES = ("monomial", "legendre", "hermite")


def family_block(
    family: str | Callable[[int, np.ndarray], np.ndarray],
    count: int,
    points: np.ndarray,
    bounds: tuple[float, float],
) -> np.ndarray:
    """Evaluate candidate functions 1..count of a family at given points.

    ``monomial`` and ``legendre`` work on the affine map of [lo, hi] onto
    [-1, 1] so that raw values stay bounded; ``hermite`` uses the
    probabilists' recurrence H_{j+1}(x) = x H_j(x) - j H_{j-1}(x) on the raw
    coordinate. A callable family receives (k, points) and returns values.
    """
    points = np.asarray(points, dtype=float)
    if callable(family):
        return np.vstack([family(k, points) for k in range(1, count + 1)])
    lo, hi = bounds
    if family == "monomial":
        xs = (2.0 * points - (lo + hi)) / (hi - lo)
        return np.vstack([xs**k for k in range(1, count + 1)])
    if family == "legendre":
        xs = (2.0 * points - (lo + hi)) / (hi - lo)
        block = np.empty((count, points.size))
        prev, cur = np.ones_like(xs), xs
        block[0] = cur
        for j in range(1, count):
            prev, cur = cur, ((2 * j + 1) * xs * cur - j * prev) / (j + 1)
            block[j] = cur
        return block
    if family == "hermite":
        block = np.empty((count, points.size))
        prev, cur = np.ones_like(points), points.copy()
        block[0] = cur
        for j in range(1, count):
            prev, cur = cur, points * cur - j * prev
            block[j] = cur
        return block
    raise DomainError(f"unknown candidate family {family!r}; pick one of {FAMILIES}")


@dataclass(frozen=True)
class OrthoBasis:
    """Orthonormal system with its construction recipe.

    ``values`` are the orthonormal rows on the space points.  ``coeffs``
    stores the Gram-Schmidt transform over the raw inputs (seed functions
    followed by ``n_family`` family candidates), which makes the basis
    re-evaluable at arbitrary points through :meth:`eval_at` -- in particular
    at the observed data when the basis was built on a quadrature grid.
    """

    values: np.ndarray
    coeffs: np.ndarray
    seed_fns: tuple
    family: str | Callable | None
    n_family: int
    space: DiscreteSpace
    bounds: tuple[float, float]

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def raw_values(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        rows = [np.broadcast_to(np.asarray(f(points), dtype=float), points.shape)
                for f in self.seed_fns]
        raw = np.vstack(rows) if rows else np.empty((0, points.size))
        if self.n_family:
            fam = family_block(self.family, self.n_family, points, self.bounds)
            raw = np.vstack([raw, fam]) if raw.size else fam
        return raw

    def eval_at(self, points: np.ndarray) -> np.ndarray:
        """Evaluate all basis functions at arbitrary points via the recipe."""
        return self.coeffs @ self.raw_values(points)


def orthonormal_basis(
    seed_fns: Sequence[Callable[[np.ndarray], np.ndarray]],
    space: DiscreteSpace,
    count: int,
    family: str | Callable = "monomial",
    bounds: tuple[float, float] | None = None,
    max_candidates: int | None = None,
) -> OrthoBasis:
    """Orthonormalize seed functions, then complete to ``count`` elements.

    The seed functions must be independent (a degenerate seed raises);
    family candidates that project to (numerically) nothing new are skipped
    with a warning, and running out of candidates before reaching ``count``
    is an error.
    """
    pts, w = space.points, space.weights
    if bounds is None:
        bounds = (float(pts[0]), float(pts[-1]))
    seed_rows = np.vstack([np.broadcast_to(np.asarray(f(pts), dtype=float), pts.shape)
                           for f in seed_fns])
    n_seed = seed_rows.shape[0]
    if n_seed > count:
        raise DomainError(f"seed already longer ({n_seed}) than requested count {count}")
    if max_candidates is None:
        max_candidates = 4 * count + 64

    values, seed_coeffs = _orthonormalize(seed_rows, w)

    width = n_seed + max_candidates
    rows = np.zeros((count, pts.size))
    crows = np.zeros((count, width))
    rows[:n_seed] = values
    crows[:n_seed, :n_seed] = seed_coeffs
    filled = n_seed
    used = 0
    skipped = 0
    if filled < count:
        block = family_block(family, max_candidates, pts, bounds)
        for k in range(max_candidates):
            used = k + 1
            u = block[k].copy()
            cu = np.zeros(width)
            cu[n_seed + k] = 1.0
            n0 = np.sqrt(np.sum(u * u * w))
            B = rows[:filled]
            C = crows[:filled]
            for _ in range(2):
                proj = B @ (u * w)
                u = u - proj @ B
                cu = cu - proj @ C
            nv = np.sqrt(np.sum(u * u * w))
            if not np.isfinite(nv) or nv < DEPENDENCE_TOL * max(n0, 1e-300):
                skipped += 1
                continue
            rows[filled] = u / nv
            crows[filled] = cu / nv
            filled += 1
            if filled >= count:
                break
    if skipped:
        warnings.warn(
            f"basis completion skipped {skipped} dependent candidate(s)",
            stacklevel=2,
        )
    if filled < count:
        raise DegenerateBasis(
            f"exhausted {used} family candidates at {filled} of {count} "
            "basis functions; the candidate family cannot span the request"
        )
    coeff_mat = crows[:, : n_seed + used]
    return OrthoBasis(
        values=rows,
        coeffs=coeff_mat,
        seed_fns=tuple(seed_fns),
        family=family if used else None,
        n_family=used,
        space=space,
        bounds=bounds,
    )


def complete_basis(
    seed: Sequence[GridFn],
    J: int,
    family: str | Callable,
    m: Measure,
) -> list[GridFn]:
    """Complete an orthonormal seed to J orthonormal functions.

    The first ``len(seed)`` outputs are the seed itself (it must already be
    orthonormal under ``m``); each appended candidate is orthonormalized
    against all predecessors.
    """
    if not seed:
        raise DomainError("complete_basis needs a non-empty seed")
    grid = seed[0].grid
    space = m.space()
    rows = np.vstack([v.values for v in seed])
    gram = (rows * space.weights) @ rows.T
    if np.abs(gram - np.eye(rows.shape[0])).max() > 1e-8:
        raise DomainError("seed passed to complete_basis is not orthonormal")
    if J < rows.shape[0]:
        raise DomainError(f"J={J} smaller than the seed ({rows.shape[0]})")
    if J == rows.shape[0]:
        return list(seed)
    seed_fns = [_FrozenRow(v.values) for v in seed]
    basis = orthonormal_basis(seed_fns, space, J, family=family,
                              bounds=(grid.bounds[0], grid.bounds[1]))
    out = list(seed)
    for row in basis.values[rows.shape[0]:]:
        out.append(GridFn(values=row, grid=grid))
    return out


class _FrozenRow:
    """Callable wrapper replaying stored grid values (seed rows are data,
    not formulas, so they cannot be re-evaluated off-grid)."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)

    def __call__(self, points):
        if points.shape != self.values.shape:
            raise DomainError("frozen seed row cannot be evaluated off its grid")
        return self.values
