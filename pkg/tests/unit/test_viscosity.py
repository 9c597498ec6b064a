"""Unit tests for sup/inf-convolution, semiconvexity, concave envelopes and the C^{1,1} check."""

import numpy as np
import pytest
from scipy.optimize import linprog

from app.errors import DimensionTooHigh, EmptyRegion, UnboundedHessian
from app.models.convolution import ConvolutionKind
from app.models.field import ScalarMultiple
from app.models.grid import FieldKind, GridField, GridSpec
from app.schemas.reports import Aggregate
from app.services.conformal import grid_verdict_tol
from app.services.fields import sample, tuned_bubble
from app.services.viscosity import (
    certify_semiconvex,
    concave_envelope,
    inf_convolve,
    sup_convolve,
    sup_convolve_brute,
    verify_c11_equivalence,
)
from app.utils.rng import uniform_ball


def _psi_grid(grid: GridSpec, fn) -> GridField:
    coords = grid.coordinates()
    return GridField(grid, fn(coords), FieldKind.psi)


def _separable(x):
    return np.sin(3.0 * x[..., 0]) + np.abs(x[..., 1] - 0.1)


def _envelope_by_lp(coords, values, x0) -> float:
    """max Σ w ξ over convex weights with Σ w x = x0, re-solved exactly on the support."""
    a_eq = np.vstack([np.ones(values.size), coords.T])
    b_eq = np.concatenate([[1.0], x0])
    res = linprog(-values, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs-ds")
    assert res.success
    support = res.x > 1e-12
    weights, *_ = np.linalg.lstsq(a_eq[:, support], b_eq, rcond=None)
    return float(weights @ values[support])


class TestSupConvolution:
    def test_matches_brute_force(self, rng):
        grid = GridSpec.box((-1.0, -1.0), (1.0, 1.0), 41)
        psi = GridField(grid, rng.uniform(-1.0, 1.0, size=grid.shape), FieldKind.psi)
        fast = sup_convolve(psi, 0.05)
        np.testing.assert_allclose(
            fast.regularized.values, sup_convolve_brute(psi, 0.05), rtol=0, atol=1e-12
        )

    def test_argmax_attains_the_value(self, rng):
        grid = GridSpec.box((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0), 9)
        psi = GridField(grid, rng.uniform(-1.0, 1.0, size=grid.shape), FieldKind.psi)
        result = sup_convolve(psi, 0.1)
        coords = grid.coordinates()
        index = tuple(np.moveaxis(result.argopt_index, -1, 0))
        attained = psi.values[index] - np.sum((coords - result.argopt) ** 2, axis=-1) / 0.1
        np.testing.assert_allclose(result.regularized.values, attained, atol=1e-12)
        assert result.kind is ConvolutionKind.sup

    def test_concave_quadratic_oracle(self):
        # sup_y -c|y|² - |x - y|²/ε = -c|x|²/(1 + cε) away from the box edges
        c, eps = 1.0, 0.1
        grid = GridSpec.box((-1.0, -1.0), (1.0, 1.0), 201)
        psi = _psi_grid(grid, lambda x: -c * np.sum(x * x, axis=-1))
        hat = sup_convolve(psi, eps).regularized.values
        coords = grid.coordinates()
        exact = -c * np.sum(coords * coords, axis=-1) / (1.0 + c * eps)
        slack = (c + 1.0 / eps) * 2 * (grid.h / 2) ** 2
        assert np.all(hat <= exact + 1e-12)
        assert np.all(hat >= exact - slack - 1e-12)

    def test_dominates_input(self, rng):
        grid = GridSpec.box((0.0, 0.0), (1.0, 1.0), 31)
        psi = GridField(grid, rng.standard_normal(grid.shape), FieldKind.psi)
        assert np.all(sup_convolve(psi, 0.01).regularized.values >= psi.values)

    def test_inf_is_mirror_of_sup(self, rng):
        grid = GridSpec.box((0.0, 0.0), (1.0, 1.0), 21)
        psi = GridField(grid, rng.standard_normal(grid.shape), FieldKind.psi)
        inf = inf_convolve(psi, 0.02)
        sup = sup_convolve(psi.with_values(-psi.values), 0.02)
        np.testing.assert_allclose(inf.regularized.values, -sup.regularized.values, atol=1e-14)
        assert np.all(inf.regularized.values <= psi.values)
        assert inf.kind is ConvolutionKind.inf

    def test_eps_must_be_positive(self):
        grid = GridSpec.box((0.0, 0.0), (1.0, 1.0), 5)
        psi = GridField(grid, np.zeros(grid.shape), FieldKind.psi)
        with pytest.raises(ValueError):
            sup_convolve(psi, 0.0)


class TestSemiconvexity:
    def test_certified_at_two_over_eps(self):
        eps = 0.05
        grid = GridSpec.box((-1.0, -1.0), (1.0, 1.0), 201)
        hat = sup_convolve(_psi_grid(grid, _separable), eps).regularized
        report = certify_semiconvex(hat, 2.0 / eps)
        assert report.passed
        assert report.min_eigenvalue >= -2.0 / eps - 1e-8

    def test_tighter_bound_fails(self):
        grid = GridSpec.box((-1.0, -1.0), (1.0, 1.0), 101)
        hat = sup_convolve(_psi_grid(grid, _separable), 0.05).regularized
        report = certify_semiconvex(hat, 1.0)
        assert not report.passed
        assert report.violating_nodes


class TestConcaveEnvelope:
    def test_concave_input_is_its_own_envelope(self):
        grid = GridSpec.box((-1.0, -1.0), (1.0, 1.0), 11)
        xi = _psi_grid(grid, lambda x: -np.sum(x * x, axis=-1))
        result = concave_envelope(xi)
        np.testing.assert_allclose(result.envelope.values, xi.values, atol=1e-12)
        assert len(result.contact_nodes) == grid.size

    def test_convex_bowl(self):
        grid = GridSpec.box((-1.0, -1.0), (1.0, 1.0), 11)
        xi = _psi_grid(grid, lambda x: np.sum(x * x, axis=-1))
        result = concave_envelope(xi)
        np.testing.assert_allclose(result.envelope.values, 2.0, atol=1e-12)
        assert sorted(result.contact_nodes) == [(0, 0), (0, 10), (10, 0), (10, 10)]

    @pytest.mark.slow
    def test_matches_linear_programme(self, rng):
        grid = GridSpec.box((-1.0,) * 3, (1.0,) * 3, 11)
        xi = GridField(grid, rng.uniform(0.0, 1.0, size=grid.shape), FieldKind.psi)
        result = concave_envelope(xi)
        coords = grid.coordinates().reshape((-1, 3))
        values = xi.values.reshape(-1)
        expected = np.array([_envelope_by_lp(coords, values, x) for x in coords])
        np.testing.assert_allclose(result.envelope.values.reshape(-1), expected, atol=1e-9)

    def test_idempotent(self):
        grid = GridSpec.box((-1.0, -1.0), (1.0, 1.0), 11)
        xi = _psi_grid(grid, _separable)
        once = concave_envelope(xi).envelope
        twice = concave_envelope(once)
        np.testing.assert_allclose(twice.envelope.values, once.values, atol=1e-10)
        assert len(twice.contact_nodes) == grid.size

    def test_contact_set_holds_the_maximum(self):
        grid = GridSpec.box((-1.0, -1.0), (1.0, 1.0), 21)
        xi = _psi_grid(
            grid, lambda x: (1 - x[..., 0] ** 2) * (1 - x[..., 1] ** 2) * np.cos(3.0 * x[..., 0])
        )
        assert xi.values.max() > 0
        assert np.all(xi.values[0, :] <= 0) and np.all(xi.values[:, -1] <= 0)
        result = concave_envelope(xi)
        assert result.contact_nodes
        peak = np.unravel_index(np.argmax(xi.values), grid.shape)
        assert tuple(int(i) for i in peak) in result.contact_nodes
        for node in result.contact_nodes:
            assert xi.values[node] >= result.envelope.values[node] - result.contact_tol

    def test_one_dimensional_tent(self):
        grid = GridSpec.box((0.0,), (1.0,), 11)
        xi = _psi_grid(grid, lambda x: np.abs(x[..., 0] - 0.5))
        result = concave_envelope(xi)
        np.testing.assert_allclose(result.envelope.values, 0.5, atol=1e-12)
        assert sorted(result.contact_nodes) == [(0,), (10,)]

    def test_box_restricts_nodes(self):
        grid = GridSpec.box((-1.0, -1.0), (1.0, 1.0), 11)
        xi = _psi_grid(grid, lambda x: np.sum(x * x, axis=-1))
        result = concave_envelope(xi, box=((-0.5, -0.5), (0.5, 0.5)))
        assert result.envelope.grid.shape == (5, 5)
        np.testing.assert_allclose(result.envelope.grid.origin, (-0.4, -0.4), atol=1e-12)
        np.testing.assert_allclose(result.envelope.values, 0.32, atol=1e-12)
        assert sorted(result.contact_nodes) == [(3, 3), (3, 7), (7, 3), (7, 7)]

    def test_box_with_too_few_nodes(self):
        grid = GridSpec.box((-1.0, -1.0), (1.0, 1.0), 11)
        xi = _psi_grid(grid, lambda x: np.sum(x * x, axis=-1))
        with pytest.raises(EmptyRegion):
            concave_envelope(xi, box=((-0.1, -0.1), (0.1, 0.1)))

    def test_dimension_cap(self):
        grid = GridSpec.box((0.0,) * 4, (1.0,) * 4, 5)
        with pytest.raises(DimensionTooHigh):
            concave_envelope(GridField(grid, np.zeros(grid.shape), FieldKind.psi))


class TestC11Equivalence:
    def test_bubble_agrees(self, bubble_n3, sigma1_n3, rng):
        pts = uniform_ball(rng, 200, 3, 1.0)
        report = verify_c11_equivalence(bubble_n3, pts, sigma1_n3, 1e-8)
        assert report.passed
        assert report.pointwise is Aggregate.solution
        assert report.nodes_checked == 200

    def test_strict_sub_agrees(self, bubble_n3, sigma1_n3, rng):
        pts = uniform_ball(rng, 100, 3, 1.0)
        report = verify_c11_equivalence(ScalarMultiple(0.9, bubble_n3), pts, sigma1_n3, 1e-8)
        assert report.passed
        assert report.pointwise is Aggregate.sub_solution

    def test_grid_bubble(self, bubble_n3, sigma1_n3):
        grid = GridSpec.box((-0.5,) * 3, (0.5,) * 3, 11)
        report = verify_c11_equivalence(
            sample(bubble_n3, grid), None, sigma1_n3, 0.025, deltas=(1e-5, 1e-7, 1e-9)
        )
        assert report.passed
        assert report.nodes_checked == 7**3

    def test_bubble_agrees_at_practical_delta(self, bubble_n3, sigma1_n3, rng):
        pts = uniform_ball(rng, 20, 3, 1.0)
        report = verify_c11_equivalence(bubble_n3, pts, sigma1_n3, 1e-8, deltas=(1e-3,))
        assert report.passed
        assert report.disagreements == []

    @pytest.mark.parametrize(
        ("scale", "expected"),
        [(0.9, Aggregate.sub_solution), (1.1, Aggregate.super_solution)],
    )
    def test_strict_verdicts_agree_at_practical_delta(
        self, bubble_n3, sigma1_n3, rng, scale, expected
    ):
        pts = uniform_ball(rng, 50, 3, 1.0)
        report = verify_c11_equivalence(
            ScalarMultiple(scale, bubble_n3), pts, sigma1_n3, 1e-8, deltas=(1e-3, 1e-5)
        )
        assert report.pointwise is expected
        assert report.passed

    def test_max_of_two_bubbles(self, sigma1_n3):
        grid = GridSpec.box((-0.5,) * 3, (0.5,) * 3, 21)
        left = sample(tuned_bubble(1.0, (-0.3, 0.0, 0.0), sigma1_n3), grid, kind=FieldKind.psi)
        right = sample(tuned_bubble(1.0, (0.3, 0.0, 0.0), sigma1_n3), grid, kind=FieldKind.psi)
        psi = GridField(grid, np.maximum(left.values, right.values), FieldKind.psi)
        report = verify_c11_equivalence(
            psi, None, sigma1_n3, grid_verdict_tol(grid, 10.0), hessian_bound=5.0
        )
        assert len(report.kink_nodes) == 17**2
        assert all(node[0] == 10 for node in report.kink_nodes)
        assert report.nodes_checked == 17**3 - 17**2
        assert report.pointwise is Aggregate.solution
        assert report.disagreements == []
        assert report.passed

    def test_kinks_are_flagged(self, sigma1_n3):
        grid = GridSpec.box((-1.0,) * 3, (1.0,) * 3, 9)
        psi = _psi_grid(grid, lambda x: 10.0 * np.abs(x[..., 0]))
        report = verify_c11_equivalence(
            psi, None, sigma1_n3, 1e-2, hessian_bound=10.0, max_kink_fraction=0.5
        )
        assert len(report.kink_nodes) == 25
        assert all(node[0] == 4 for node in report.kink_nodes)

    def test_too_many_kinks(self, sigma1_n3):
        grid = GridSpec.box((-1.0,) * 3, (1.0,) * 3, 9)
        psi = _psi_grid(grid, lambda x: 10.0 * np.abs(x[..., 0]))
        with pytest.raises(UnboundedHessian):
            verify_c11_equivalence(psi, None, sigma1_n3, 1e-2, hessian_bound=10.0)

    def test_analytic_needs_region(self, bubble_n3, sigma1_n3):
        with pytest.raises(EmptyRegion):
            verify_c11_equivalence(bubble_n3, None, sigma1_n3, 1e-8)
