"""Volterra integral equations of the second kind on the triangle.

This module provides the composition quadrature for kernels on the triangle
``0 <= xi <= x <= 1`` and everything built from it:

* iterated-kernel resolvents (Neumann series),
* the coupling kernel of the stabilized target dynamics, solved through the
  resolvent formula, with a direct successive-approximation solver kept as an
  independent oracle,
* the residual-coupling operator assembled from the transform kernels, and
* the kernels of the inverse state transform.

Path integrals between triangle nodes use the trapezoid rule with the
first-order Gregory end correction (weights ``h/12`` moved between the two
outermost node pairs whenever the span covers at least two cells).  The plain
trapezoid rule leaves an ``O(h^2)`` error with a coefficient large enough to
be visible at the accuracy this package targets; the end correction removes
it at zero extra structural cost since compositions remain dense matrix
products.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionError, DomainError, NonconvergenceError, NumericError
from .grid import GridSpec

__all__ = [
    "ResolventKernel",
    "InverseKernels",
    "tri_to_matrix",
    "matrix_to_tri",
    "compose",
    "resolvent",
    "solve_target_coupling",
    "solve_target_coupling_picard",
    "target_coupling_residual",
    "apply_residual_coupling",
    "inverse_transform_kernels",
]


@dataclass(frozen=True)
class ResolventKernel:
    """Summed iterated-kernel series of a scalar triangle kernel.

    ``values`` is the resolvent on the flat triangle index; ``tail_bound`` is
    the sup-norm of the last series term (the truncation control), and
    ``term_sups`` records every term's sup-norm so the factorial decay of the
    series can be audited.
    """

    values: np.ndarray
    n_terms_used: int
    tail_bound: float
    term_sups: tuple[float, ...]


@dataclass(frozen=True)
class InverseKernels:
    """Kernels of the inverse state transform (ensemble part and scalar part)."""

    l: np.ndarray
    ltilde: np.ndarray
    n_terms_used: int
    tail_bound: float


def tri_to_matrix(spec: GridSpec, values: np.ndarray) -> np.ndarray:
    """Expand flat triangle storage to lower-triangular matrices.

    ``(n_tri,)`` becomes ``(N, N)`` and ``(n_tri, ny)`` becomes ``(ny, N, N)``
    with row = x-index, column = xi-index and zeros above the diagonal.
    """
    tri = spec.tri
    n = spec.nx + 1
    values = np.asarray(values, dtype=float)
    if values.shape[0] != tri.n_nodes:
        raise DimensionError(
            f"expected {tri.n_nodes} triangle rows, got {values.shape[0]}")
    if values.ndim == 1:
        out = np.zeros((n, n))
        out[tri.i_index, tri.j_index] = values
    elif values.ndim == 2:
        out = np.zeros((values.shape[1], n, n))
        out[:, tri.i_index, tri.j_index] = values.T
    else:
        raise DimensionError(f"expected 1 or 2 dimensions, got {values.ndim}")
    return out


def matrix_to_tri(spec: GridSpec, mat: np.ndarray) -> np.ndarray:
    """Inverse of :func:`tri_to_matrix` (batch dimension moves last again)."""
    tri = spec.tri
    mat = np.asarray(mat, dtype=float)
    if mat.ndim == 2:
        return mat[tri.i_index, tri.j_index].copy()
    if mat.ndim == 3:
        return mat[:, tri.i_index, tri.j_index].T.copy()
    raise DimensionError(f"expected 2 or 3 dimensions, got {mat.ndim}")


@lru_cache(maxsize=8)
def _wide_span_mask(n: int) -> np.ndarray:
    idx = np.arange(n)
    return (idx[:, None] - idx[None, :]) >= 2


def compose(spacing: float, first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """Quadrature of ``out(x, xi) = integral_xi^x second(x, s) first(s, xi) ds``.

    ``first`` and ``second`` are lower-triangular matrices on the uniform
    x-grid (``second`` may carry leading batch dimensions, or ``first`` may —
    they broadcast).  Node weights are trapezoid with the first Gregory end
    correction on spans of two or more cells; spans of one cell reduce to the
    plain trapezoid and the empty span gives exactly zero.  The result is
    again lower-triangular with a zero diagonal.
    """
    n = first.shape[-1]
    diag_f = np.diagonal(first, axis1=-2, axis2=-1)
    diag_g = np.diagonal(second, axis1=-2, axis2=-1)
    out = spacing * np.matmul(second, first)
    out -= (spacing / 2.0) * (second * diag_f[..., None, :]
                              + diag_g[..., :, None] * first)
    corr = -(diag_g[..., :, None] * first) - (second * diag_f[..., None, :])
    sub_g = np.diagonal(second, offset=-1, axis1=-2, axis2=-1)
    sub_f = np.diagonal(first, offset=-1, axis1=-2, axis2=-1)
    corr[..., 1:, :] += sub_g[..., :, None] * first[..., :-1, :]
    corr[..., :, :-1] += second[..., :, 1:] * sub_f[..., None, :]
    out += (spacing / 12.0) * np.where(_wide_span_mask(n), corr, 0.0)
    return out


def resolvent(spec: GridSpec, ktilde: np.ndarray, tol: float = 1e-12,
              max_terms: int = 60) -> ResolventKernel:
    """Sum the iterated kernels of a scalar triangle kernel.

    Terms ``T_1 = kernel`` and ``T_{n+1}(x, xi) = integral_xi^x
    T_n(x, s) kernel(s, xi) ds`` are accumulated until the last term's
    sup-norm drops to ``tol``; the factorial decay of Volterra iterates makes
    this terminate in a few dozen terms for any bounded kernel.
    """
    values = np.asarray(ktilde, dtype=float)
    if not np.all(np.isfinite(values)):
        raise NumericError("resolvent input contains non-finite values")
    if not tol > 0:
        raise DomainError(f"tol must be > 0, got {tol}")
    kernel = tri_to_matrix(spec, values)
    term = kernel.copy()
    acc = kernel.copy()
    sups = [float(np.max(np.abs(term)))]
    n_terms = 1
    while sups[-1] > tol:
        if n_terms >= max_terms:
            raise NonconvergenceError(
                f"resolvent series not below tol={tol} after {max_terms} terms",
                final_delta=sups[-1],
            )
        term = compose(spec.hx, kernel, term)
        acc += term
        sups.append(float(np.max(np.abs(term))))
        n_terms += 1
    return ResolventKernel(
        values=matrix_to_tri(spec, acc),
        n_terms_used=n_terms,
        tail_bound=sups[-1],
        term_sups=tuple(sups),
    )


def _coupling_source(spec: GridSpec, drive_grid: np.ndarray,
                     ktilde: np.ndarray) -> np.ndarray:
    """Zeroth iterate drive(x, y) * ktilde(x, xi) as a (ny, N, N) batch."""
    drive_grid = np.asarray(drive_grid, dtype=float)
    if drive_grid.shape[0] != spec.nx + 1:
        raise DimensionError(
            f"drive grid must have {spec.nx + 1} x-rows, got {drive_grid.shape[0]}")
    kernel = tri_to_matrix(spec, np.asarray(ktilde, dtype=float))
    return drive_grid.T[:, :, None] * kernel[None, :, :]


def solve_target_coupling(spec: GridSpec, drive_grid: np.ndarray,
                          ktilde: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Solve the coupling-kernel Volterra equation via the resolvent.

    The unknown ``kappa(x, xi, y)`` satisfies ``kappa = kappa0 +
    integral_xi^x ktilde(s, xi) kappa(x, s, y) ds`` with ``kappa0(x, xi, y) =
    drive(x, y) ktilde(x, xi)``; the solution is assembled explicitly as
    ``kappa0`` plus the resolvent of ``ktilde`` composed with ``kappa0``.
    Returns flat triangle storage of shape ``(n_tri, ny)``.
    """
    res = resolvent(spec, ktilde, tol)
    source = _coupling_source(spec, drive_grid, ktilde)
    res_mat = tri_to_matrix(spec, res.values)
    kappa = source + compose(spec.hx, res_mat, source)
    return matrix_to_tri(spec, kappa)


def solve_target_coupling_picard(spec: GridSpec, drive_grid: np.ndarray,
                                 ktilde: np.ndarray, tol: float = 1e-12,
                                 max_iter: int = 200) -> np.ndarray:
    """Independent oracle: solve the same equation by direct iteration.

    Starts from zero and applies the fixed-point map until the sup-norm
    increment drops to ``tol``.  Kept deliberately separate from
    :func:`solve_target_coupling` so the two routes cross-check each other.
    """
    kernel = tri_to_matrix(spec, np.asarray(ktilde, dtype=float))
    source = _coupling_source(spec, drive_grid, ktilde)
    kappa = np.zeros_like(source)
    for _ in range(max_iter):
        new = source + compose(spec.hx, kernel, kappa)
        delta = float(np.max(np.abs(new - kappa)))
        kappa = new
        if delta <= tol:
            return matrix_to_tri(spec, kappa)
    raise NonconvergenceError(
        f"direct coupling iteration not below tol={tol} after {max_iter} sweeps",
        final_delta=delta,
    )


def target_coupling_residual(spec: GridSpec, kappa: np.ndarray,
                             drive_grid: np.ndarray,
                             ktilde: np.ndarray) -> float:
    """Sup-norm residual of a coupling kernel in its defining equation.

    Evaluates ``kappa - kappa0 - integral_xi^x ktilde(s, xi) kappa(x, s) ds``
    with the same composition quadrature the solvers use, so a correct
    solution scores at roundoff level.
    """
    kernel = tri_to_matrix(spec, np.asarray(ktilde, dtype=float))
    source = _coupling_source(spec, drive_grid, ktilde)
    kap_mat = tri_to_matrix(spec, np.asarray(kappa, dtype=float))
    resid = kap_mat - source - compose(spec.hx, kernel, kap_mat)
    return float(np.max(np.abs(matrix_to_tri(spec, resid))))


def apply_residual_coupling(spec: GridSpec, k: np.ndarray, kappa: np.ndarray,
                            drive_grid: np.ndarray, x_index: int,
                            xi_index: int, a: np.ndarray) -> np.ndarray:
    """Apply the residual-coupling operator at one triangle node.

    For the ensemble vector ``a`` this returns, on the y-grid,
    ``<k(x, xi), a> drive(x, .) + integral_xi^x <k(s, xi), a> kappa(x, s, .) ds``
    with the inner products taken by y-quadrature and the path integral by
    the trapezoid rule over the x-nodes between ``xi`` and ``x``.
    """
    tri = spec.tri
    if not 0 <= xi_index <= x_index <= spec.nx:
        raise DomainError(
            f"need 0 <= xi_index <= x_index <= nx, got ({x_index}, {xi_index})")
    a = np.asarray(a, dtype=float)
    if a.shape != (spec.ny,):
        raise DimensionError(f"expected a of shape ({spec.ny},), got {a.shape}")
    s_range = np.arange(xi_index, x_index + 1)
    rows = s_range * (s_range + 1) // 2 + xi_index
    inner = np.asarray(k, dtype=float)[rows] @ (spec.y_weights * a)
    out = inner[-1] * np.asarray(drive_grid, dtype=float)[x_index]
    if x_index > xi_index:
        w = np.full(s_range.shape[0], spec.hx)
        w[0] = w[-1] = spec.hx / 2.0
        kap_rows = x_index * (x_index + 1) // 2 + s_range
        out = out + (w * inner) @ np.asarray(kappa, dtype=float)[kap_rows]
    return out


def inverse_transform_kernels(spec: GridSpec, k: np.ndarray, ktilde: np.ndarray,
                              tol: float = 1e-12) -> InverseKernels:
    """Build the kernels that undo the state transform.

    The scalar inverse kernel is the resolvent of the scalar direct kernel;
    the ensemble inverse kernel follows explicitly as ``l(x, xi, y) =
    k(x, xi, y) + integral_xi^x ltilde(x, s) k(s, xi, y) ds``.
    """
    res = resolvent(spec, ktilde, tol)
    k = np.asarray(k, dtype=float)
    k_mat = tri_to_matrix(spec, k)
    lt_mat = tri_to_matrix(spec, res.values)
    l_values = k + matrix_to_tri(spec, compose(spec.hx, k_mat, lt_mat))
    return InverseKernels(
        l=l_values,
        ltilde=res.values,
        n_terms_used=res.n_terms_used,
        tail_bound=res.tail_bound,
    )
