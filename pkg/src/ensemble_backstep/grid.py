"""Uniform grids on [0,1], the triangular index set, quadrature, interpolation.

Conventions used throughout the package:

* x-nodes are ``i/nx`` for ``i = 0..nx`` (``nx`` intervals, ``nx+1`` nodes).
* y-nodes are ``j/(ny-1)`` for ``j = 0..ny-1`` (endpoints included).
* Fields on the triangle ``T = {0 <= xi <= x <= 1}`` are stored dense and
  ragged in row-major order: row ``i`` holds the ``i+1`` nodes
  ``(x_i, xi_0..xi_i)``, flattened so that node ``(i, j)`` sits at flat index
  ``i*(i+1)/2 + j``.  A "tri field" is an array of shape ``(n_tri, ny)``; a
  "tri scalar field" has shape ``(n_tri,)``.
* All integrals use the composite trapezoid rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DimensionError, DomainError

#: Tolerance for characteristic endpoints that land just outside the domain
#: through roundoff; queries farther out raise :class:`DomainError`.
CLAMP_TOL = 1e-9


@dataclass(frozen=True)
class GridSpec:
    """Uniform discretization of space, ensemble variable, and time.

    Parameters
    ----------
    nx : int
        Number of x-intervals (``nx + 1`` nodes at ``i/nx``).
    ny : int
        Number of y-nodes, evenly spaced with endpoints included.
    dt : float
        Time step in seconds.
    t_final : float
        Simulation horizon in seconds.
    """

    nx: int
    ny: int
    dt: float = 0.004
    t_final: float = 5.0

    def __post_init__(self):
        if self.nx < 2:
            raise ValueError(f"nx must be >= 2, got {self.nx}")
        if self.ny < 2:
            raise ValueError(f"ny must be >= 2, got {self.ny}")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not self.t_final > 0:
            raise ValueError(f"t_final must be > 0, got {self.t_final}")

    @property
    def hx(self) -> float:
        """x-grid spacing 1/nx."""
        return 1.0 / self.nx

    @property
    def hy(self) -> float:
        """y-grid spacing 1/(ny-1)."""
        return 1.0 / (self.ny - 1)

    @cached_property
    def x_nodes(self) -> np.ndarray:
        """The nx+1 nodes i/nx."""
        return np.arange(self.nx + 1) / self.nx

    @cached_property
    def y_nodes(self) -> np.ndarray:
        """The ny nodes j/(ny-1)."""
        return np.arange(self.ny) / (self.ny - 1)

    @cached_property
    def x_weights(self) -> np.ndarray:
        """Trapezoid weights on the x-nodes."""
        return trapezoid_weights(self.nx + 1, self.hx)

    @cached_property
    def y_weights(self) -> np.ndarray:
        """Trapezoid weights on the y-nodes."""
        return trapezoid_weights(self.ny, self.hy)

    @cached_property
    def tri(self) -> "TriangularIndex":
        """Triangular index set over the x-nodes."""
        return TriangularIndex(self.nx)


def trapezoid_weights(n_nodes: int, spacing: float) -> np.ndarray:
    """Composite trapezoid weights for ``n_nodes`` uniformly spaced nodes."""
    w = np.full(n_nodes, spacing)
    w[0] = w[-1] = spacing / 2.0
    return w


def gregory_weights(n_nodes: int, spacing: float) -> np.ndarray:
    """Trapezoid weights with the first Gregory end correction.

    Spans of at least two cells get the ``spacing/12`` end-point correction
    (the same convention as the Volterra composition routine); a one-cell
    span stays plain trapezoid.
    """
    w = trapezoid_weights(n_nodes, spacing)
    if n_nodes >= 3:
        c = spacing / 12.0
        w[0] -= c
        w[1] += c
        w[-2] += c
        w[-1] -= c
    return w


def integrate_y(spec: GridSpec, samples: np.ndarray) -> float:
    """Trapezoid value of an integral over the ensemble variable y.

    Realizes the ensemble inner product weight: ``integrate_y(spec, p*q)``
    is the discrete ``<p, q>``.

    Parameters
    ----------
    spec : GridSpec
    samples : array of shape (ny,)
        Integrand sampled on the y-nodes.

    Returns
    -------
    float
    """
    samples = np.asarray(samples)
    if samples.shape != (spec.ny,):
        raise DimensionError(
            f"expected {spec.ny} y-samples, got shape {samples.shape}"
        )
    return float(np.dot(spec.y_weights, samples))


def integrate_x(spec: GridSpec, samples: np.ndarray, upper_index: int | None = None) -> float:
    """Trapezoid value of an x-integral, optionally only up to node ``upper_index``.

    With ``upper_index = i`` the value approximates the integral from 0 to
    ``x_i``; the default integrates over the whole interval [0,1].

    Parameters
    ----------
    spec : GridSpec
    samples : array of shape (nx+1,)
    upper_index : int, optional

    Returns
    -------
    float
    """
    samples = np.asarray(samples)
    if samples.shape != (spec.nx + 1,):
        raise DimensionError(
            f"expected {spec.nx + 1} x-samples, got shape {samples.shape}"
        )
    if upper_index is None:
        upper_index = spec.nx
    if not 0 <= upper_index <= spec.nx:
        raise DomainError(f"upper_index {upper_index} outside 0..{spec.nx}")
    if upper_index == 0:
        return 0.0
    part = samples[: upper_index + 1]
    return float((part[:-1] + part[1:]).sum() * (spec.hx / 2.0))


def cumulative_integrate_x(spec: GridSpec, samples: np.ndarray) -> np.ndarray:
    """All partial trapezoid integrals from 0 to each x-node at once.

    Returns an array ``c`` with ``c[i] = integrate_x(spec, samples, i)``.
    Accepts extra trailing axes (integrates along axis 0).
    """
    samples = np.asarray(samples)
    if samples.shape[0] != spec.nx + 1:
        raise DimensionError(
            f"expected {spec.nx + 1} x-samples, got shape {samples.shape}"
        )
    increments = (samples[:-1] + samples[1:]) * (spec.hx / 2.0)
    out = np.zeros_like(samples)
    np.cumsum(increments, axis=0, out=out[1:])
    return out


@dataclass(frozen=True)
class TriangularIndex:
    """Index set of nodes ``(x_i, xi_j)`` with ``0 <= j <= i <= nx``.

    Nodes are ordered row-major (outer index i, inner index j), which is the
    flat storage order of every tri field in the package.
    """

    nx: int

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.nx + 2) // 2

    def flat(self, i: int, j: int) -> int:
        """Flat index of node (i, j)."""
        if not 0 <= j <= i <= self.nx:
            raise DomainError(f"(i={i}, j={j}) outside the triangle, nx={self.nx}")
        return i * (i + 1) // 2 + j

    @cached_property
    def row_start(self) -> np.ndarray:
        """Flat index of the first node of each row: i*(i+1)/2."""
        i = np.arange(self.nx + 1)
        return i * (i + 1) // 2

    @cached_property
    def i_index(self) -> np.ndarray:
        """Row index i of every flat node, in storage order."""
        return np.repeat(np.arange(self.nx + 1), np.arange(1, self.nx + 2))

    @cached_property
    def j_index(self) -> np.ndarray:
        """Column index j of every flat node, in storage order."""
        return np.concatenate([np.arange(i + 1) for i in range(self.nx + 1)])

    @cached_property
    def x_coord(self) -> np.ndarray:
        """x_i of every flat node."""
        return self.i_index / self.nx

    @cached_property
    def xi_coord(self) -> np.ndarray:
        """xi_j of every flat node."""
        return self.j_index / self.nx

    def diagonal_flat(self) -> np.ndarray:
        """Flat indices of the diagonal nodes (i, i)."""
        i = np.arange(self.nx + 1)
        return i * (i + 1) // 2 + i

    def row_slice(self, i: int) -> slice:
        """Slice of flat storage covering row i (nodes (i, 0..i))."""
        start = i * (i + 1) // 2
        return slice(start, start + i + 1)


def corner_weights(nx: int, x: np.ndarray, xi: np.ndarray):
    """Bilinear interpolation stencils on the triangle, vectorized.

    For each query point returns four flat node indices and four weights whose
    weighted sum interpolates a tri field at that point.  Full cells use the
    bilinear formula; cells touching the diagonal use barycentric weights on
    the corner triangle (which degenerate to linear interpolation along the
    diagonal itself).  Queries are clamped to the triangle; callers are
    responsible for rejecting points farther than roundoff outside it.

    Parameters
    ----------
    nx : int
    x, xi : arrays of equal shape

    Returns
    -------
    idx : int64 array of shape ``x.shape + (4,)``
    w : float array of shape ``x.shape + (4,)``
    """
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    xi = np.minimum(np.clip(np.asarray(xi, dtype=float), 0.0, 1.0), x)
    h = 1.0 / nx
    i = np.minimum((x * nx).astype(np.int64), nx - 1)
    j = np.minimum((xi * nx).astype(np.int64), i)
    a = x * nx - i
    b = xi * nx - j
    diag = j == i

    f00 = i * (i + 1) // 2 + j
    f10 = (i + 1) * (i + 2) // 2 + j
    f01 = f00 + 1
    f11 = f10 + 1

    w00 = (1.0 - a) * (1.0 - b)
    w10 = a * (1.0 - b)
    w01 = (1.0 - a) * b
    w11 = a * b

    # Diagonal cells: barycentric weights on {(i,i), (i+1,i), (i+1,i+1)}.
    ad = (x - xi) * nx
    bd = xi * nx - i
    w00 = np.where(diag, 1.0 - ad - bd, w00)
    w10 = np.where(diag, ad, w10)
    w01 = np.where(diag, 0.0, w01)
    w11 = np.where(diag, bd, w11)
    f01 = np.where(diag, f00, f01)

    idx = np.stack([f00, f10, f01, f11], axis=-1)
    w = np.stack([w00, w10, w01, w11], axis=-1)
    return idx, w


def bilinear_tri(tri: TriangularIndex, field: np.ndarray, x: float, xi: float,
                 y_index: int | None = None):
    """Interpolate a tri field at an off-grid point of the triangle.

    Parameters
    ----------
    tri : TriangularIndex
    field : array of shape (n_tri, ...) — tri field or tri scalar field
    x, xi : floats with ``0 <= xi <= x <= 1`` up to roundoff
    y_index : int, optional
        Ensemble column to read; None interpolates every trailing column.

    Returns
    -------
    float or array

    Raises
    ------
    DomainError
        If the query lies outside [0,1]^2 (or above the diagonal) by more
        than roundoff tolerance.
    """
    if not (-CLAMP_TOL <= x <= 1.0 + CLAMP_TOL and -CLAMP_TOL <= xi <= 1.0 + CLAMP_TOL):
        raise DomainError(f"query ({x}, {xi}) outside the unit square")
    if xi > x + CLAMP_TOL:
        raise DomainError(f"query ({x}, {xi}) above the diagonal")
    field = np.asarray(field)
    if field.shape[0] != tri.n_nodes:
        raise DimensionError(
            f"field has {field.shape[0]} rows, triangle has {tri.n_nodes} nodes"
        )
    idx, w = corner_weights(tri.nx, x, xi)
    values = field[idx]
    if field.ndim > 1 and y_index is not None:
        values = values[:, y_index]
    result = np.tensordot(w, values, axes=(0, 0))
    return float(result) if np.ndim(result) == 0 else result
