"""Grids, quadrature, triangular indexing, and interpolation."""

import math

import numpy as np
import pytest

from ensemble_backstep.errors import DimensionError, DomainError
from ensemble_backstep.grid import (
    GridSpec,
    TriangularIndex,
    bilinear_tri,
    corner_weights,
    cumulative_integrate_x,
    gregory_weights,
    integrate_x,
    integrate_y,
    trapezoid_weights,
)


class TestGridSpec:
    def test_node_layout(self):
        spec = GridSpec(nx=4, ny=3)
        np.testing.assert_allclose(spec.x_nodes, [0.0, 0.25, 0.5, 0.75, 1.0])
        np.testing.assert_allclose(spec.y_nodes, [0.0, 0.5, 1.0])
        assert spec.hx == 0.25
        assert spec.hy == 0.5

    @pytest.mark.parametrize(
        "kwargs",
        [dict(nx=1, ny=3), dict(nx=4, ny=1), dict(nx=4, ny=3, dt=0.0),
         dict(nx=4, ny=3, t_final=-1.0)],
    )
    def test_rejects_bad_parameters(self, kwargs):
        with pytest.raises(ValueError):
            GridSpec(**kwargs)


class TestQuadrature:
    def test_integrate_y_constant(self):
        for ny in (2, 3, 5, 17, 120):
            spec = GridSpec(nx=2, ny=ny)
            assert abs(integrate_y(spec, np.ones(ny)) - 1.0) <= 1e-13

    def test_integrate_y_linear(self):
        spec = GridSpec(nx=2, ny=5)
        assert abs(integrate_y(spec, spec.y_nodes) - 0.5) <= 1e-13

    def test_integrate_y_oscillatory(self):
        # integral of y(y-1)cos(2 pi y) over [0,1] is 1/(2 pi^2)
        spec = GridSpec(nx=2, ny=120)
        y = spec.y_nodes
        val = integrate_y(spec, y * (y - 1.0) * np.cos(2.0 * np.pi * y))
        assert abs(val - 1.0 / (2.0 * np.pi**2)) <= 1e-4

    def test_integrate_x_constant(self):
        spec = GridSpec(nx=7, ny=2)
        assert abs(integrate_x(spec, np.ones(8)) - 1.0) <= 1e-13

    def test_integrate_x_partial_upper_index(self):
        spec = GridSpec(nx=8, ny=2)
        val = integrate_x(spec, spec.x_nodes, upper_index=4)
        assert abs(val - 0.125) <= 1e-13

    def test_integrate_x_exponential(self):
        spec = GridSpec(nx=200, ny=2)
        val = integrate_x(spec, np.exp(spec.x_nodes))
        assert abs(val - (math.e - 1.0)) <= 1e-4

    def test_linearity(self, rng):
        spec = GridSpec(nx=31, ny=23)
        for _ in range(20):
            a, b = rng.uniform(-3, 3, 2)
            f = rng.standard_normal(spec.ny)
            g = rng.standard_normal(spec.ny)
            lhs = integrate_y(spec, a * f + b * g)
            rhs = a * integrate_y(spec, f) + b * integrate_y(spec, g)
            assert abs(lhs - rhs) <= 1e-12
            fx = rng.standard_normal(spec.nx + 1)
            gx = rng.standard_normal(spec.nx + 1)
            lhs = integrate_x(spec, a * fx + b * gx)
            rhs = a * integrate_x(spec, fx) + b * integrate_x(spec, gx)
            assert abs(lhs - rhs) <= 1e-12

    def test_affine_exactness_all_sizes(self):
        for nx in (2, 3, 5, 17, 64):
            spec = GridSpec(nx=nx, ny=nx + 1)
            f = 2.0 - 3.0 * spec.x_nodes
            assert abs(integrate_x(spec, f) - 0.5) <= 1e-13
            g = 2.0 - 3.0 * spec.y_nodes
            assert abs(integrate_y(spec, g) - 0.5) <= 1e-13

    def test_length_mismatch(self):
        spec = GridSpec(nx=5, ny=4)
        with pytest.raises(DimensionError):
            integrate_y(spec, np.ones(5))
        with pytest.raises(DimensionError):
            integrate_x(spec, np.ones(5))

    def test_cumulative_matches_partial(self):
        spec = GridSpec(nx=16, ny=2)
        f = np.exp(spec.x_nodes)
        cum = cumulative_integrate_x(spec, f)
        for i in range(spec.nx + 1):
            assert abs(cum[i] - integrate_x(spec, f, upper_index=i)) <= 1e-13

    def test_weight_sums(self):
        for n in (2, 3, 4, 9):
            h = 0.1
            assert abs(trapezoid_weights(n, h).sum() - (n - 1) * h) <= 1e-14
            assert abs(gregory_weights(n, h).sum() - (n - 1) * h) <= 1e-14

    def test_gregory_beats_trapezoid_on_smooth_integrand(self):
        # end-corrected weights should gain roughly two orders of accuracy
        n, h = 51, 1.0 / 50
        x = np.arange(n) * h
        f = np.exp(x)
        exact = math.e - 1.0
        err_trap = abs(trapezoid_weights(n, h) @ f - exact)
        err_greg = abs(gregory_weights(n, h) @ f - exact)
        assert err_greg < err_trap / 30.0


class TestTriangularIndex:
    def test_counts_and_order(self):
        tri = TriangularIndex(4)
        assert tri.n_nodes == 15
        assert tri.flat(0, 0) == 0
        assert tri.flat(4, 4) == 14
        # row-major: i index nondecreasing, j resets per row
        assert np.all(np.diff(tri.i_index) >= 0)
        for i in range(5):
            sl = tri.row_slice(i)
            np.testing.assert_array_equal(tri.j_index[sl], np.arange(i + 1))
            assert np.all(tri.i_index[sl] == i)

    def test_no_node_above_diagonal(self):
        tri = TriangularIndex(9)
        assert np.all(tri.j_index <= tri.i_index)

    def test_flat_rejects_outside(self):
        tri = TriangularIndex(4)
        with pytest.raises(DomainError):
            tri.flat(2, 3)

    def test_diagonal_flat(self):
        tri = TriangularIndex(5)
        diag = tri.diagonal_flat()
        assert np.all(tri.i_index[diag] == tri.j_index[diag])
        assert diag.shape == (6,)


class TestBilinearTri:
    def test_constant_field(self):
        tri = TriangularIndex(6)
        field = np.full(tri.n_nodes, 3.25)
        assert abs(bilinear_tri(tri, field, 0.41, 0.17) - 3.25) <= 1e-13

    def test_reproduces_coordinate(self):
        tri = TriangularIndex(10)
        field = tri.x_coord.copy()
        assert abs(bilinear_tri(tri, field, 0.35, 0.1) - 0.35) <= 1e-12

    def test_product_field_at_cell_center(self):
        # bilinear interpolation is exact for a + bx + c xi + d x xi
        tri = TriangularIndex(10)
        field = tri.x_coord * tri.xi_coord
        val = bilinear_tri(tri, field, 0.65, 0.25)
        assert abs(val - 0.65 * 0.25) <= 1e-13

    def test_affine_reproduction_random_queries(self, rng):
        tri = TriangularIndex(12)
        a, b, c = 0.7, -1.3, 2.1
        field = a + b * tri.x_coord + c * tri.xi_coord
        for _ in range(100):
            x = rng.uniform(0.0, 1.0)
            xi = rng.uniform(0.0, x)
            val = bilinear_tri(tri, field, x, xi)
            assert abs(val - (a + b * x + c * xi)) <= 1e-12

    def test_rejects_outside_unit_square(self):
        tri = TriangularIndex(5)
        field = np.zeros(tri.n_nodes)
        with pytest.raises(DomainError):
            bilinear_tri(tri, field, 1.2, 0.1)
        with pytest.raises(DomainError):
            bilinear_tri(tri, field, 0.5, -0.2)

    def test_vector_field_interpolation(self):
        tri = TriangularIndex(8)
        field = np.stack([tri.x_coord, 2.0 * tri.xi_coord], axis=1)
        val = bilinear_tri(tri, field, 0.5, 0.25)
        np.testing.assert_allclose(val, [0.5, 0.5], atol=1e-12)

    def test_corner_weights_partition_of_unity(self, rng):
        nx = 9
        xs = rng.uniform(0.0, 1.0, 200)
        xis = xs * rng.uniform(0.0, 1.0, 200)
        idx4, w4 = corner_weights(nx, xs, xis)
        np.testing.assert_allclose(w4.sum(axis=1), 1.0, atol=1e-12)
        assert idx4.min() >= 0
        assert idx4.max() < TriangularIndex(nx).n_nodes
