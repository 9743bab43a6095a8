"""Convex sets with exact projection oracles.

Every set exposes ``project`` and ``distance`` acting on arrays whose last
axis is the ambient dimension, so a batch of points of shape ``(m, n)`` is
projected row by row in one call.  The module-level functions
:func:`project`, :func:`distance`, :func:`relaxed_project` and
:func:`reflect` add dimension checks on top of that.
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np

from ._config import get_tolerances
from .exceptions import NumericalError, UsageError

__all__ = [
    "as_point",
    "ConvexSet",
    "Halfspace",
    "Hyperplane",
    "Ball",
    "Box",
    "AffineSubspace",
    "EpigraphPowerNorm",
    "SemialgebraicMeta",
    "SetCollection",
    "project",
    "distance",
    "relaxed_project",
    "reflect",
    "polynomial_degree",
]


def as_point(x, dim=None, name="x"):
    """Convert ``x`` to a float array and check finiteness and dimension.

    Accepts a single point of shape ``(n,)`` or a batch of shape ``(..., n)``.
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if not np.all(np.isfinite(arr)):
        raise UsageError(f"{name} has non-finite coordinates")
    if dim is not None and arr.shape[-1] != dim:
        raise UsageError(f"{name} has dimension {arr.shape[-1]}, expected {dim}")
    return arr


def _vector(x, name, allow_inf=False):
    if allow_inf:
        arr = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(np.isnan(arr)):
            raise UsageError(f"{name} has NaN coordinates")
    else:
        arr = as_point(x, name=name)
    if arr.ndim != 1:
        raise UsageError(f"{name} must be one-dimensional")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


class ConvexSet:
    """Base class; subclasses define ``dim`` and ``_project``."""

    dim: int
    degree: int = 1

    def project(self, x):
        return self._project(np.asarray(x, dtype=float))

    def distance(self, x):
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - self._project(x), axis=-1)

    def contains(self, x, tol=None):
        tol = get_tolerances().membership if tol is None else tol
        return self.membership_residual(x) <= tol

    def membership_residual(self, x):
        return self.distance(x)

    def _project(self, x):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Halfspace(ConvexSet):
    """``{x : <normal, x> <= offset}``."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        a = _vector(self.normal, "normal")
        if not np.any(a):
            raise UsageError("halfspace normal must be nonzero")
        object.__setattr__(self, "normal", a)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def dim(self):
        return self.normal.shape[0]

    def _project(self, x):
        a = self.normal
        excess = np.maximum(x @ a - self.offset, 0.0)
        return x - (excess / (a @ a))[..., None] * a

    def distance(self, x):
        x = np.asarray(x, dtype=float)
        return np.maximum((x @ self.normal) - self.offset, 0.0) / np.linalg.norm(self.normal)


@dataclass(frozen=True, eq=False)
class Hyperplane(ConvexSet):
    """``{x : <normal, x> = offset}``."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        a = _vector(self.normal, "normal")
        if not np.any(a):
            raise UsageError("hyperplane normal must be nonzero")
        object.__setattr__(self, "normal", a)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def dim(self):
        return self.normal.shape[0]

    def _project(self, x):
        a = self.normal
        return x - ((x @ a - self.offset) / (a @ a))[..., None] * a

    def distance(self, x):
        x = np.asarray(x, dtype=float)
        return np.abs((x @ self.normal) - self.offset) / np.linalg.norm(self.normal)


@dataclass(frozen=True, eq=False)
class Ball(ConvexSet):
    center: np.ndarray
    radius: float
    degree = 2

    def __post_init__(self):
        object.__setattr__(self, "center", _vector(self.center, "center"))
        if not self.radius > 0:
            raise UsageError("ball radius must be positive")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self):
        return self.center.shape[0]

    def _project(self, x):
        v = x - self.center
        norm = np.linalg.norm(v, axis=-1)
        scale = self.radius / np.maximum(norm, self.radius)
        return self.center + scale[..., None] * v

    def distance(self, x):
        x = np.asarray(x, dtype=float)
        return np.maximum(np.linalg.norm(x - self.center, axis=-1) - self.radius, 0.0)


@dataclass(frozen=True, eq=False)
class Box(ConvexSet):
    """Componentwise bounds; infinite bounds give orthants and slabs."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo, hi = _vector(self.lower, "lower", True), _vector(self.upper, "upper", True)
        if lo.shape != hi.shape:
            raise UsageError("box bounds have different dimensions")
        if np.any(lo > hi):
            raise UsageError("box requires lower <= upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self):
        return self.lower.shape[0]

    def _project(self, x):
        return np.clip(x, self.lower, self.upper)


@dataclass(frozen=True, eq=False)
class AffineSubspace(ConvexSet):
    """``anchor + span(orthonormal_basis)``; an empty basis gives the point ``{anchor}``."""

    orthonormal_basis: np.ndarray
    anchor: np.ndarray

    def __post_init__(self):
        anchor = _vector(self.anchor, "anchor")
        basis = np.asarray(self.orthonormal_basis, dtype=float).reshape(-1, anchor.shape[0])
        if not np.all(np.isfinite(basis)):
            raise UsageError("basis has non-finite entries")
        gram = basis @ basis.T
        if np.max(np.abs(gram - np.eye(basis.shape[0])), initial=0.0) > get_tolerances().orthonormal:
            raise UsageError("basis vectors are not orthonormal")
        basis = basis.copy()
        basis.setflags(write=False)
        object.__setattr__(self, "orthonormal_basis", basis)
        object.__setattr__(self, "anchor", anchor)

    @property
    def dim(self):
        return self.anchor.shape[0]

    def _project(self, x):
        B = self.orthonormal_basis
        coords = (x - self.anchor) @ B.T
        return self.anchor + coords @ B


@dataclass(frozen=True, eq=False)
class EpigraphPowerNorm(ConvexSet):
    """``{(x, r) in R^n x R : r >= ||x||^d}`` for even ``d >= 2``.

    Points are stored with the scalar ``r`` as the last coordinate, so the
    ambient dimension is ``n + 1``.
    """

    n: int
    d: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise UsageError("epigraph block dimension n must be a positive integer")
        if int(self.d) != self.d or self.d < 2 or self.d % 2:
            raise UsageError("epigraph exponent d must be an even integer >= 2")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "d", int(self.d))

    @property
    def dim(self):
        return self.n + 1

    @property
    def degree(self):
        return self.d

    def membership_residual(self, x):
        x = np.asarray(x, dtype=float)
        gap = np.linalg.norm(x[..., :-1], axis=-1) ** self.d - x[..., -1]
        return np.maximum(gap, 0.0)

    def _project(self, x):
        tol = get_tolerances()
        flat = np.ascontiguousarray(x, dtype=float).reshape(-1, self.dim)
        out = np.empty_like(flat)
        residual = _epigraph_project(flat, self.d, tol.root_abs, tol.root_max_iter, out)
        if residual >= 0.0:
            raise NumericalError("epigraph projection root solve did not converge",
                                 residual=residual)
        return out.reshape(np.shape(x))


@numba.njit(cache=True)
def _epigraph_project(points, d, abs_tol, max_iter, out):
    # Along z/||z|| the projection radius tau solves
    #   tau + d tau^(d-1) (tau^d - s) = ||z||,
    # with a unique root in [max(s,0)^(1/d), ||z||] (the multiplier tau^d - s is >= 0).
    # Safeguarded Newton; returns -1 on success, else the last residual.
    m, dim = points.shape
    n = dim - 1
    for i in range(m):
        s = points[i, n]
        nz2 = 0.0
        for k in range(n):
            nz2 += points[i, k] * points[i, k]
        nz = math.sqrt(nz2)
        if s >= nz ** d:
            for k in range(dim):
                out[i, k] = points[i, k]
            continue
        if nz == 0.0:
            for k in range(n):
                out[i, k] = 0.0
            out[i, n] = max(s, 0.0)
            continue
        lo = min(max(s, 0.0) ** (1.0 / d), nz)
        hi = nz
        tau = hi
        converged = False
        val = 0.0
        for _ in range(max_iter):
            val = tau + d * tau ** (d - 1) * (tau ** d - s) - nz
            if val == 0.0:
                converged = True
                break
            if val < 0.0:
                lo = tau
            else:
                hi = tau
            deriv = 1.0 + d * (2 * d - 1) * tau ** (2 * d - 2) - d * (d - 1) * s * tau ** (d - 2)
            new = tau - val / deriv if deriv > 0.0 else 0.5 * (lo + hi)
            if not (lo < new < hi):
                new = 0.5 * (lo + hi)
            step = abs(new - tau)
            tau = new
            if step <= abs_tol or hi - lo <= abs_tol:
                converged = True
                break
        if not converged:
            return abs(val)
        scale = tau / nz
        for k in range(n):
            out[i, k] = scale * points[i, k]
        out[i, n] = tau ** d
    return -1.0


@dataclass(frozen=True, eq=False)
class SemialgebraicMeta(ConvexSet):
    """Wraps ``inner`` and records its ambient dimension and polynomial degree."""

    n: int
    d: int
    inner: ConvexSet

    def __post_init__(self):
        if self.inner.dim != self.n:
            raise UsageError(f"inner set has dimension {self.inner.dim}, metadata says {self.n}")
        if self.d < 1:
            raise UsageError("degree must be >= 1")

    @property
    def dim(self):
        return self.n

    @property
    def degree(self):
        return self.d

    def _project(self, x):
        return self.inner.project(x)

    def distance(self, x):
        return self.inner.distance(x)

    def membership_residual(self, x):
        return self.inner.membership_residual(x)


def polynomial_degree(cset):
    """Maximal degree of the convex polynomials describing ``cset``."""
    return int(cset.degree)


@dataclass(frozen=True)
class SetCollection:
    """Ordered, nonempty family of sets sharing one ambient dimension."""

    sets: tuple = field(default_factory=tuple)

    def __post_init__(self):
        sets = tuple(self.sets)
        if not sets:
            raise UsageError("a set collection must be nonempty")
        dims = {c.dim for c in sets}
        if len(dims) != 1:
            raise UsageError(f"sets have mixed dimensions {sorted(dims)}")
        object.__setattr__(self, "sets", sets)

    @property
    def dim(self):
        return self.sets[0].dim

    def __len__(self):
        return len(self.sets)

    def __getitem__(self, i):
        return self.sets[i]

    def __iter__(self):
        return iter(self.sets)

    def distances(self, x):
        """Per-set distances, shape ``x.shape[:-1] + (m,)``."""
        x = np.asarray(x, dtype=float)
        return np.stack([c.distance(x) for c in self.sets], axis=-1)

    def max_distance(self, x):
        return np.max(self.distances(x), axis=-1)


def _checked(cset, x):
    return as_point(x, dim=cset.dim)


def project(cset, x):
    """Nearest point of ``cset`` to ``x``."""
    return cset.project(_checked(cset, x))


def distance(cset, x):
    return cset.distance(_checked(cset, x))


def relaxed_project(cset, eta, x):
    """Prox of ``eta * dist^2``: ``(x + 2 eta P x) / (2 eta + 1)``."""
    if not eta > 0:
        raise UsageError("eta must be positive")
    x = _checked(cset, x)
    return (x + 2.0 * eta * cset.project(x)) / (2.0 * eta + 1.0)


def reflect(cset, x):
    """Reflector ``2 P x - x``."""
    x = _checked(cset, x)
    return 2.0 * cset.project(x) - x
