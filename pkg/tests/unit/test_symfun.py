"""Unit tests for eigenvalues, σ_k and the Gårding cones."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from app.errors import BadK, NonConvergence
from app.models.matrix import SymMatrix
from app.schemas.operator import OperatorSpec
from app.services.symfun import (
    OUTSIDE_CLOSED_CONE,
    eigen_sym,
    elementary_symmetric,
    f_eval,
    f_eval_batch,
    get_custom,
    in_cone,
    operator_of_matrix,
    register_custom,
    sample_lipschitz,
    sample_strict_ellipticity,
    sigma_k,
    solve_diagonal_level,
)
from app.utils.rng import make_rng, random_orthogonal

finite = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False, allow_infinity=False)
milli = st.integers(min_value=-10_000, max_value=10_000).map(lambda i: i / 1000.0)


class TestEigenSym:
    def test_diagonal(self):
        spec = eigen_sym(SymMatrix.from_array(np.diag([3.0, -1.0, 2.0])))
        np.testing.assert_array_equal(spec.eigenvalues, [-1.0, 2.0, 3.0])
        assert spec.sweeps == 0

    def test_matches_numpy(self, rng):
        a = rng.standard_normal((5, 5))
        m = SymMatrix.from_array(a + a.T)
        spec = eigen_sym(m)
        np.testing.assert_allclose(spec.eigenvalues, np.linalg.eigvalsh(m.entries), atol=1e-10)
        assert spec.residual < 1e-10

    def test_batched(self, rng):
        a = rng.standard_normal((4, 7, 3, 3))
        m = SymMatrix.from_array(a + np.swapaxes(a, -1, -2))
        spec = eigen_sym(m)
        assert spec.eigenvalues.shape == (4, 7, 3)
        np.testing.assert_allclose(spec.eigenvalues, np.linalg.eigvalsh(m.entries), atol=1e-10)
        assert np.all(np.diff(spec.eigenvalues, axis=-1) >= 0)

    def test_eigenvectors_orthonormal(self, rng):
        a = rng.standard_normal((4, 4))
        spec = eigen_sym(SymMatrix.from_array(a + a.T))
        q = spec.eigenvectors
        np.testing.assert_allclose(q.T @ q, np.eye(4), atol=1e-10)

    def test_sweep_cap(self, rng):
        a = rng.standard_normal((6, 6))
        with pytest.raises(NonConvergence):
            eigen_sym(SymMatrix.from_array(a + a.T), tol=1e-30, max_sweeps=1)

    @given(arrays(np.float64, (3, 3), elements=milli))
    @settings(max_examples=50, deadline=None)
    def test_trace_preserved(self, a):
        m = SymMatrix.from_array(a)
        spec = eigen_sym(m)
        assert math.isclose(
            float(np.sum(spec.eigenvalues)), float(m.trace()), abs_tol=1e-9 * (1 + m.frobenius())
        )


class TestSymMatrix:
    def test_upper_triangle_mirrored(self):
        m = SymMatrix.from_array([[1.0, 2.0], [5.0, 3.0]])
        np.testing.assert_array_equal(m.entries, [[1.0, 2.0], [2.0, 3.0]])

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            SymMatrix.from_array(np.zeros((2, 3)))


class TestElementarySymmetric:
    def test_known_values(self):
        e = elementary_symmetric(np.array([1.0, 2.0, 3.0]), 3)
        np.testing.assert_array_equal(e, [1.0, 6.0, 11.0, 6.0])

    def test_sigma_k_bad_k(self):
        with pytest.raises(BadK):
            sigma_k(np.ones(3), 4)
        with pytest.raises(BadK):
            sigma_k(np.ones(3), 0)

    @given(arrays(np.float64, (5,), elements=finite), st.integers(min_value=1, max_value=5))
    @settings(max_examples=100, deadline=None)
    def test_permutation_invariance_bit_exact(self, lam, k):
        perm = make_rng(0).permutation(5)
        assert sigma_k(lam, k) == sigma_k(lam[perm], k)


class TestCones:
    def test_gamma2_membership(self):
        cone = OperatorSpec.sigma_k(3, 2).cone
        assert bool(in_cone(np.array([1.0, 1.0, -0.4]), cone))
        assert not bool(in_cone(np.array([1.0, 1.0, -0.6]), cone))

    def test_closed_band(self):
        cone = OperatorSpec.sigma_k(3, 1).cone
        edge = np.array([1.0, -1.0, 0.0])
        assert not bool(in_cone(edge, cone))
        assert bool(in_cone(edge, cone, closed=True))
        assert bool(in_cone(edge - 1e-12, cone, closed=True, boundary_tol=1e-10))

    def test_gamma_n_is_positive_orthant(self, rng):
        cone = OperatorSpec.sigma_k(4, 4).cone
        lam = rng.uniform(-1.0, 1.0, size=(500, 4))
        np.testing.assert_array_equal(in_cone(lam, cone), np.all(lam > 0, axis=1))


class TestFEval:
    def test_sigma1_root(self):
        assert f_eval(np.ones(3), OperatorSpec.sigma_k(3, 1)) == pytest.approx(3.0)

    def test_sigma2_root(self):
        # σ_2(1,1,1,1) = 6
        assert f_eval(np.ones(4), OperatorSpec.sigma_k(4, 2)) == pytest.approx(math.sqrt(6.0))

    def test_raw_family(self):
        spec = OperatorSpec.sigma_k(4, 2, root=False)
        assert f_eval(np.ones(4), spec) == pytest.approx(6.0)

    def test_outside_closed_cone(self):
        assert f_eval(np.array([-1.0, -1.0, 0.5]), OperatorSpec.sigma_k(3, 1)) is (
            OUTSIDE_CLOSED_CONE
        )

    def test_boundary_value_zero(self):
        assert f_eval(np.array([1.0, -1.0, 0.0]), OperatorSpec.sigma_k(3, 1)) == 0.0

    def test_batch_nan_outside(self):
        values, inside = f_eval_batch(
            np.array([[1.0, 1.0, 1.0], [-1.0, -1.0, -1.0]]), OperatorSpec.sigma_k(3, 1)
        )
        assert inside.tolist() == [True, False]
        assert np.isnan(values[1])

    def test_orthogonal_invariance(self, rng):
        spec = OperatorSpec.sigma_k(4, 2)
        d = np.diag(rng.uniform(0.5, 2.0, 4))
        r = random_orthogonal(rng, 4)
        direct = operator_of_matrix(SymMatrix.from_array(d), spec)
        rotated = operator_of_matrix(SymMatrix.from_array(r.T @ d @ r), spec)
        assert rotated == pytest.approx(direct, rel=1e-12)


class TestCustomOperators:
    def test_shifted_trace_registered(self):
        op = get_custom("shifted_trace")
        assert float(op.f(np.zeros(3))) == 1.0
        assert float(op.margin(np.zeros(3))) > 0

    def test_constant_solves_shifted_trace(self):
        spec = OperatorSpec.custom(3, "shifted_trace")
        assert f_eval(np.zeros(3), spec) == 1.0

    def test_register_and_lookup(self):
        register_custom("doubled_trace", lambda lam: 2.0 * lam.sum(-1), lambda lam: lam.sum(-1))
        spec = OperatorSpec.custom(2, "doubled_trace")
        assert f_eval(np.array([1.0, 2.0]), spec) == 6.0
        assert f_eval(np.array([-1.0, -2.0]), spec) is OUTSIDE_CLOSED_CONE

    def test_unknown_name(self):
        with pytest.raises(KeyError):
            get_custom("no-such-operator")


class TestDiagonalLevel:
    @pytest.mark.parametrize(("n", "k"), [(3, 1), (4, 2), (5, 3), (6, 6)])
    def test_sigma_k_root(self, n, k):
        spec = OperatorSpec.sigma_k(n, k)
        t = solve_diagonal_level(spec)
        assert f_eval(np.full(n, t), spec) == pytest.approx(1.0, rel=1e-12)

    def test_raw(self):
        spec = OperatorSpec.sigma_k(4, 2, root=False, level=3.0)
        t = solve_diagonal_level(spec)
        assert f_eval(np.full(4, t), spec) == pytest.approx(3.0, rel=1e-12)

    def test_custom_by_root_finding(self):
        spec = OperatorSpec.custom(3, "shifted_trace", level=1.5)
        assert solve_diagonal_level(spec) == pytest.approx(0.5, abs=1e-12)


class TestStructuralProbes:
    @pytest.mark.parametrize(("n", "k"), [(3, 1), (3, 2), (4, 2), (4, 4)])
    def test_strict_ellipticity(self, rng, n, k):
        spec = OperatorSpec.sigma_k(n, k)
        assert sample_strict_ellipticity(spec, (0.1, 2.0), rng, samples=2000) > 0

    def test_lipschitz_finite(self, rng):
        spec = OperatorSpec.sigma_k(3, 2)
        bound = sample_lipschitz(spec, (0.5, 2.0), rng, samples=2000)
        assert 0 < bound < 10

    def test_trace_positive_on_cone(self, rng):
        spec = OperatorSpec.sigma_k(5, 3)
        lam = rng.uniform(-1.0, 2.0, size=(10_000, 5))
        members = lam[in_cone(lam, spec.cone)]
        assert members.shape[0] > 0
        assert np.all(members.sum(axis=1) > 0)
