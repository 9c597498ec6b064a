"""Unit tests for the conformal Hessian, operator evaluation and classification."""

import numpy as np
import pytest

from app.errors import DomainMismatch, EmptyRegion, NonPositiveU
from app.models.field import Constant, RadialProfile, ScalarMultiple
from app.models.grid import FieldKind, GridSpec
from app.models.jet import Jet2
from app.schemas.operator import OperatorSpec
from app.schemas.reports import Aggregate, Verdict
from app.services.conformal import (
    aggregate_verdicts,
    classify,
    conformal_hessian,
    evaluate_operator,
    grid_verdict_tol,
    pointwise_verdicts,
)
from app.services.fields import jet_u, sample, tuned_bubble
from app.services.symfun import OUTSIDE_CLOSED_CONE, solve_diagonal_level
from app.utils.rng import uniform_ball


class TestConformalHessian:
    def test_bubble_is_umbilic(self, bubble_n3, rng):
        pts = uniform_ball(rng, 200, 3, 2.0)
        cj = conformal_hessian(jet_u(bubble_n3, pts), 3)
        np.testing.assert_allclose(
            cj.eigenvalues, np.full((200, 3), bubble_n3.eigenvalue), rtol=1e-10
        )

    def test_bubble_n4(self, bubble_n4, sigma2_n4, rng):
        pts = uniform_ball(rng, 100, 4, 1.0, np.asarray(bubble_n4.x0))
        cj = conformal_hessian(jet_u(bubble_n4, pts), 4)
        expected = solve_diagonal_level(sigma2_n4)
        np.testing.assert_allclose(cj.eigenvalues, np.full((100, 4), expected), rtol=1e-10)

    def test_constant_has_zero_hessian(self):
        cj = conformal_hessian(jet_u(Constant(3.0, 3), np.zeros(3)), 3)
        assert not np.any(cj.a.entries)

    def test_scaling_law(self, bubble_n3):
        x = np.array([0.3, -0.2, 0.5])
        base = conformal_hessian(jet_u(bubble_n3, x), 3)
        scaled = conformal_hessian(jet_u(ScalarMultiple(0.9, bubble_n3), x), 3)
        np.testing.assert_allclose(scaled.a.entries, 0.9**-4 * base.a.entries, rtol=1e-12)

    def test_exactly_symmetric(self, bubble_n4):
        cj = conformal_hessian(jet_u(bubble_n4, np.array([0.5, 0.1, -0.7, 0.2])), 4)
        np.testing.assert_array_equal(cj.a.entries, cj.a.entries.T)

    def test_low_dimension(self):
        jet = Jet2(np.float64(1.0), np.zeros(2), np.zeros((2, 2)))
        with pytest.raises(DomainMismatch):
            conformal_hessian(jet, 2)

    def test_non_positive_u(self):
        jet = Jet2(np.float64(-1.0), np.zeros(3), np.zeros((3, 3)))
        with pytest.raises(NonPositiveU):
            conformal_hessian(jet, 3)


class TestEvaluateOperator:
    def test_bubble_on_level(self, bubble_n3, sigma1_n3):
        value, cj = evaluate_operator(bubble_n3, (0.2, 0.4, -0.1), sigma1_n3)
        assert value == pytest.approx(1.0, abs=1e-12)
        assert cj.eigenvalues.shape == (3,)

    def test_constant_sits_on_cone_boundary(self, sigma1_n3):
        value, _ = evaluate_operator(Constant(1.0, 3), (0.0, 0.0, 0.0), sigma1_n3)
        assert value == pytest.approx(0.0)

    def test_outside_closed_cone(self, sigma1_n3):
        # u = 1 + |x|² has A^u = -4I at the origin
        bowl = RadialProfile((0.0, 1.0, 2.0, 3.0), (1.0, 2.0, 5.0, 10.0), (0.0, 0.0, 0.0))
        value, cj = evaluate_operator(bowl, (0.0, 0.0, 0.0), sigma1_n3)
        assert value is OUTSIDE_CLOSED_CONE
        np.testing.assert_allclose(cj.eigenvalues, [-4.0, -4.0, -4.0], rtol=1e-10)

    def test_dimension_mismatch(self, bubble_n3, sigma2_n4):
        with pytest.raises(DomainMismatch):
            evaluate_operator(bubble_n3, (0.0, 0.0, 0.0), sigma2_n4)


class TestVerdicts:
    spec = OperatorSpec.sigma_k(3, 1)

    def test_pointwise(self):
        eig = np.array(
            [
                [1.0, 1.0, 1.0],
                [0.1, 0.1, 0.1],
                [0.3, 0.3, 0.4],
                [-1.0, -1.0, -1.0],
                [-1.0, 0.0, 0.0],
            ]
        )
        values = np.array([3.0, 0.3, 1.0, np.nan, 2.0])
        verdicts = pointwise_verdicts(values, eig, self.spec, 1e-8)
        assert verdicts == [
            Verdict.strict_sub,
            Verdict.strict_super,
            Verdict.on_level,
            Verdict.outside_closed_cone,
            Verdict.cone_violation,
        ]

    def test_aggregate_solution(self):
        values = np.array([1.0, 1.0 + 1e-10])
        result = aggregate_verdicts([Verdict.on_level] * 2, values, self.spec, 1e-8)
        assert result.aggregate is Aggregate.solution
        assert result.margin is None
        assert result.max_abs_deviation == pytest.approx(1e-10)

    def test_aggregate_sub_margin(self):
        values = np.array([1.5, 1.2, 1.0])
        verdicts = [Verdict.strict_sub, Verdict.strict_sub, Verdict.on_level]
        result = aggregate_verdicts(verdicts, values, self.spec, 1e-8)
        assert result.aggregate is Aggregate.sub_solution
        assert result.margin == pytest.approx(0.2)

    def test_outside_cone_counts_as_super(self):
        values = np.array([0.5, np.nan])
        verdicts = [Verdict.strict_super, Verdict.outside_closed_cone]
        result = aggregate_verdicts(verdicts, values, self.spec, 1e-8)
        assert result.aggregate is Aggregate.super_solution
        assert result.margin == pytest.approx(0.5)
        assert result.counts["OutsideClosedCone"] == 1

    def test_mixed(self):
        values = np.array([1.5, 0.5])
        verdicts = [Verdict.strict_sub, Verdict.strict_super]
        result = aggregate_verdicts(verdicts, values, self.spec, 1e-8)
        assert result.aggregate is Aggregate.mixed

    def test_only_anomalies_is_mixed(self):
        result = aggregate_verdicts([Verdict.cone_violation], np.array([2.0]), self.spec, 1e-8)
        assert result.aggregate is Aggregate.mixed
        assert result.anomalies == [0]

    def test_no_finite_values(self):
        result = aggregate_verdicts(
            [Verdict.outside_closed_cone], np.array([np.nan]), self.spec, 1e-8
        )
        assert result.max_abs_deviation == float("inf")


class TestClassify:
    def test_bubble_is_solution(self, bubble_n3, sigma1_n3, rng):
        pts = uniform_ball(rng, 1000, 3, 1.0)
        result = classify(bubble_n3, pts, sigma1_n3, 1e-8)
        assert result.aggregate is Aggregate.solution
        assert result.max_abs_deviation < 1e-10
        assert len(result.points) == 1000

    def test_bubble_n4_is_solution(self, bubble_n4, sigma2_n4, rng):
        pts = uniform_ball(rng, 500, 4, 1.0, np.asarray(bubble_n4.x0))
        result = classify(bubble_n4, pts, sigma2_n4, 1e-8)
        assert result.aggregate is Aggregate.solution

    @pytest.mark.parametrize(
        ("n", "k"), [(n, k) for n in range(3, 7) for k in range(1, n + 1)]
    )
    def test_tuned_bubble_solves_every_sigma_k(self, n, k, rng):
        spec = OperatorSpec.sigma_k(n, k)
        center = tuple(float(v) for v in rng.uniform(-1.0, 1.0, size=n))
        field = tuned_bubble(float(rng.uniform(0.5, 2.0)), center, spec)
        pts = uniform_ball(rng, 1000, n, 1.0, np.asarray(center))
        result = classify(field, pts, spec, 1e-8)
        assert result.aggregate is Aggregate.solution
        assert result.max_abs_deviation <= 1e-9

    def test_shrunk_bubble_is_sub(self, bubble_n3, sigma1_n3, rng):
        pts = uniform_ball(rng, 200, 3, 1.0)
        result = classify(ScalarMultiple(0.9, bubble_n3), pts, sigma1_n3, 1e-8)
        assert result.aggregate is Aggregate.sub_solution
        assert result.margin == pytest.approx(0.9**-4 - 1.0, rel=1e-9)

    def test_grown_bubble_is_super(self, bubble_n3, sigma1_n3, rng):
        pts = uniform_ball(rng, 200, 3, 1.0)
        result = classify(ScalarMultiple(1.1, bubble_n3), pts, sigma1_n3, 1e-8)
        assert result.aggregate is Aggregate.super_solution

    def test_constant_is_super(self, sigma1_n3):
        grid = GridSpec.box((-1.0,) * 3, (1.0,) * 3, 5)
        result = classify(Constant(1.0, 3), grid, sigma1_n3, 1e-8)
        assert result.aggregate is Aggregate.super_solution
        assert len(result.points) == 125

    @pytest.mark.parametrize("kind", [FieldKind.u, FieldKind.psi])
    def test_grid_bubble_is_solution(self, bubble_n3, sigma1_n3, kind):
        grid = GridSpec.box((-0.5,) * 3, (0.5,) * 3, 21)
        gf = sample(bubble_n3, grid, kind=kind)
        tol = grid_verdict_tol(grid, 10.0)
        result = classify(gf, None, sigma1_n3, tol)
        assert result.aggregate is Aggregate.solution
        assert len(result.points) == 17**3

    def test_grid_node_subset(self, bubble_n3, sigma1_n3):
        grid = GridSpec.box((-0.5,) * 3, (0.5,) * 3, 21)
        gf = sample(bubble_n3, grid)
        result = classify(gf, np.array([[10, 10, 10]]), sigma1_n3, 1e-2)
        np.testing.assert_allclose(result.points[0].point, [0.0, 0.0, 0.0], atol=1e-15)

    def test_analytic_needs_region(self, bubble_n3, sigma1_n3):
        with pytest.raises(EmptyRegion):
            classify(bubble_n3, None, sigma1_n3, 1e-8)

    def test_empty_region(self, bubble_n3, sigma1_n3):
        with pytest.raises(EmptyRegion):
            classify(bubble_n3, np.empty((0, 3)), sigma1_n3, 1e-8)


class TestGridTolerance:
    def test_scales_with_h_squared(self):
        grid = GridSpec.box((0.0,) * 3, (1.0,) * 3, 11)
        assert grid_verdict_tol(grid, 10.0) == pytest.approx(0.1)
        assert grid_verdict_tol(grid.refined(), 10.0) == pytest.approx(0.025)
