"""Characteristic tracing: crossing times, launch points, path integrity."""

import numpy as np
import pytest

from ensemble_backstep.characteristics import (
    trace_crossing_batch,
    trace_crossing_curve,
    trace_edge_batch,
    trace_edge_curve,
)
from ensemble_backstep.errors import DomainError
from ensemble_backstep.grid import GridSpec
from ensemble_backstep.model import PlantModel, sample_coefficients


def _plant(speed_u, speed_v, name="custom", depends_y=False):
    """Uncoupled plant with the given transport speeds."""
    return PlantModel(
        name=name,
        speed_u=speed_u,
        speed_v=speed_v,
        exchange=lambda x, y, e: np.zeros(
            np.broadcast_shapes(np.shape(x), np.shape(y), np.shape(e))),
        drive=lambda x, y: np.zeros(
            np.broadcast_shapes(np.shape(x), np.shape(y))),
        readout=lambda x, y: np.zeros(
            np.broadcast_shapes(np.shape(x), np.shape(y))),
        inflow_gain=lambda y: np.zeros(np.shape(y)),
        speed_u_depends_y=depends_y,
    )


SPEC = GridSpec(nx=50, ny=11)


class TestCrossingClosedForms:
    def test_unit_speeds(self, toy):
        # equal constant speeds meet halfway: s = (x - xi)/2, launch midway
        for y in (0.0, 0.37, 1.0):
            cc = trace_crossing_curve(toy, 1.0, 0.0, y, spec=SPEC)
            assert abs(cc.s_end - 0.5) <= 1e-9
            assert abs(cc.launch - 0.5) <= 1e-9

    def test_degenerate_diagonal_point(self, toy):
        cc = trace_crossing_curve(toy, 0.625, 0.625, 0.5, spec=SPEC)
        assert cc.s_end == 0.0
        assert cc.launch == 0.625
        assert cc.n_steps == 0

    def test_unequal_constant_speeds(self):
        plant = _plant(
            lambda x, y: 2.0 * np.ones(np.broadcast_shapes(np.shape(x), np.shape(y))),
            lambda x: np.ones(np.shape(x)),
        )
        cc = trace_crossing_curve(plant, 0.9, 0.3, 0.5, spec=SPEC)
        assert abs(cc.s_end - 0.2) <= 1e-9
        assert abs(cc.launch - 0.7) <= 1e-9

    def test_random_triples_match_closed_form(self, toy, rng):
        xs = rng.uniform(0.0, 1.0, 200)
        xis = xs * rng.uniform(0.0, 1.0, 200)
        ys = rng.uniform(0.0, 1.0, 200)
        coeff = sample_coefficients(toy, SPEC)
        bundle = trace_crossing_batch(coeff, xs, xis, ys)
        np.testing.assert_allclose(bundle.s_end, (xs - xis) / 2.0, atol=1e-9)
        np.testing.assert_allclose(bundle.launch, (xs + xis) / 2.0, atol=1e-9)


class TestEdgeClosedForms:
    def test_unit_speed(self, toy):
        cc = trace_edge_curve(toy, 0.8, 0.5, spec=SPEC)
        assert abs(cc.s_end - 0.5) <= 1e-9
        assert abs(cc.launch - 0.3) <= 1e-9

    def test_already_on_edge(self, toy):
        cc = trace_edge_curve(toy, 0.4, 0.0, spec=SPEC)
        assert cc.s_end == 0.0
        assert cc.launch == 0.4

    def test_affine_speed(self):
        # speed 1 + x gives crossing time ln(1.5) and launch 1/3
        plant = _plant(
            lambda x, y: np.ones(np.broadcast_shapes(np.shape(x), np.shape(y))),
            lambda x: 1.0 + np.asarray(x, dtype=float),
        )
        cc = trace_edge_curve(plant, 1.0, 0.5, step=1e-4, spec=SPEC)
        assert abs(cc.s_end - np.log(1.5)) <= 1e-8
        assert abs(cc.launch - (2.0 / 1.5 - 1.0)) <= 1e-8


class TestPathIntegrity:
    def test_crossing_path_endpoints(self, toy):
        cc = trace_crossing_curve(toy, 0.9, 0.2, 0.4, spec=SPEC)
        assert abs(cc.path_x[0] - cc.launch) <= 1e-9
        assert abs(cc.path_xi[0] - cc.launch) <= 1e-9
        assert abs(cc.path_x[-1] - 0.9) <= 1e-9
        assert abs(cc.path_xi[-1] - 0.2) <= 1e-9
        assert np.all(np.diff(cc.path_x) >= -1e-12)
        assert cc.path_s[0] == 0.0
        assert abs(cc.path_s[-1] - cc.s_end) <= 1e-12
        assert np.all(np.diff(cc.path_s) > 0.0)

    def test_edge_path_endpoints(self, toy):
        cc = trace_edge_curve(toy, 0.7, 0.45, spec=SPEC)
        assert abs(cc.path_xi[0] - 0.0) <= 1e-9
        assert abs(cc.path_xi[-1] - 0.45) <= 1e-9
        assert abs(cc.path_x[0] - cc.launch) <= 1e-9
        assert abs(cc.path_x[-1] - 0.7) <= 1e-9
        assert np.all(np.diff(cc.path_x) >= -1e-12)

    def test_path_stays_on_straight_characteristic(self, toy):
        # with unit speeds the forward crossing pair is x(s) = launch + s
        # and xi(s) = launch - s, meeting the query pair at s = s_end
        cc = trace_crossing_curve(toy, 0.8, 0.1, 0.9, spec=SPEC)
        np.testing.assert_allclose(cc.path_x, cc.launch + cc.path_s, atol=1e-9)
        np.testing.assert_allclose(cc.path_xi, cc.launch - cc.path_s, atol=1e-9)


class TestBatchInvariants:
    def test_consistency_identity_crossing(self, toy, rng):
        # integral of (speed_u(xi(s), y) + speed_v(x(s))) ds equals x - xi
        coeff = sample_coefficients(toy, SPEC)
        xs = rng.uniform(0.0, 1.0, 120)
        xis = xs * rng.uniform(0.0, 1.0, 120)
        ys = rng.uniform(0.0, 1.0, 120)
        bundle = trace_crossing_batch(coeff, xs, xis, ys)
        for c in range(xs.shape[0]):
            sl = slice(bundle.offsets[c], bundle.offsets[c + 1])
            lam = coeff.model.speed_u(np.clip(bundle.sample_xi[sl], 0, 1), ys[c])
            mu = coeff.model.speed_v(np.clip(bundle.sample_x[sl], 0, 1))
            val = float(bundle.weights[sl] @ (lam + mu))
            assert abs(val - (xs[c] - xis[c])) <= 1e-6

    def test_consistency_identity_edge(self, toy, rng):
        # integral of speed_v along the curve from the edge equals xi
        coeff = sample_coefficients(toy, SPEC)
        xs = rng.uniform(0.0, 1.0, 120)
        xis = xs * rng.uniform(0.0, 1.0, 120)
        bundle = trace_edge_batch(coeff, xs, xis)
        for c in range(xs.shape[0]):
            sl = slice(bundle.offsets[c], bundle.offsets[c + 1])
            mu = coeff.model.speed_v(np.clip(bundle.sample_xi[sl], 0, 1))
            val = float(bundle.weights[sl] @ mu)
            assert abs(val - xis[c]) <= 1e-6

    def test_uniform_crossing_time_bound(self, toy, rng):
        coeff = sample_coefficients(toy, SPEC)
        eps1 = coeff.speed_u_min + coeff.speed_v_min
        xs = rng.uniform(0.0, 1.0, 300)
        xis = xs * rng.uniform(0.0, 1.0, 300)
        ys = rng.uniform(0.0, 1.0, 300)
        bundle = trace_crossing_batch(coeff, xs, xis, ys)
        assert np.all(bundle.s_end <= 1.0 / eps1 + 1e-9)

    def test_edge_time_independent_of_x(self, toy):
        coeff = sample_coefficients(toy, SPEC)
        xi = 0.3
        xs = np.array([0.35, 0.6, 0.85, 1.0])
        bundle = trace_edge_batch(coeff, xs, np.full(4, xi))
        assert np.max(bundle.s_end) - np.min(bundle.s_end) <= 1e-10

    def test_lipschitz_in_y(self, rng):
        # a y-dependent ensemble speed: the crossing time must vary smoothly
        plant = _plant(
            lambda x, y: 1.0 + 0.5 * np.asarray(y) * np.ones(np.shape(x)),
            lambda x: np.ones(np.shape(x)),
            depends_y=True,
        )
        coeff = sample_coefficients(plant, SPEC)
        ys = np.linspace(0.0, 1.0, 50)
        bundle = trace_crossing_batch(coeff, np.full(50, 0.9), np.full(50, 0.2), ys)
        s = bundle.s_end
        quotients = np.abs(np.diff(s)) / (ys[1] - ys[0])
        # |ds/dy| <= (x - xi) * sup|d speed/dy| / eps1^2 = 0.7 * 0.5 / 4
        assert np.max(quotients) <= 0.7 * 0.5 / 4.0 + 1e-3
        # and the toy model's y-independent speed gives a flat crossing time
        toy_coeff = sample_coefficients(
            _plant(lambda x, y: np.ones(np.broadcast_shapes(np.shape(x), np.shape(y))),
                   lambda x: np.ones(np.shape(x))), SPEC)
        b2 = trace_crossing_batch(toy_coeff, np.full(50, 0.9), np.full(50, 0.2), ys)
        assert np.max(np.abs(np.diff(b2.s_end))) <= 1e-12


class TestValidation:
    def test_rejects_inverted_pair(self, toy):
        with pytest.raises(DomainError):
            trace_crossing_curve(toy, 0.3, 0.5, 0.5, spec=SPEC)

    def test_rejects_bad_y(self, toy):
        with pytest.raises(DomainError):
            trace_crossing_curve(toy, 0.5, 0.3, 1.5, spec=SPEC)

    def test_rejects_outside_unit_interval(self, toy):
        with pytest.raises(DomainError):
            trace_edge_curve(toy, 1.2, 0.5, spec=SPEC)


def test_bundle_samples_fully_populated(toy, rng):
    """Every stored sample slot is meaningful (no uninitialized tails)."""
    coeff = sample_coefficients(toy, SPEC)
    xs = rng.uniform(0.0, 1.0, 64)
    xis = xs * rng.uniform(0.0, 1.0, 64)
    ys = rng.uniform(0.0, 1.0, 64)
    bundle = trace_crossing_batch(coeff, xs, xis, ys)
    assert np.all(bundle.sample_x >= -1e-6)
    assert np.all(bundle.sample_x <= 1.0 + 1e-6)
    assert np.all(bundle.sample_xi >= -1e-6)
    assert np.all(bundle.sample_xi <= 1.0 + 1e-6)
    # last sample of each curve is the refined meeting point
    last = bundle.offsets[1:] - 1
    np.testing.assert_allclose(bundle.sample_x[last], bundle.launch, atol=1e-12)
