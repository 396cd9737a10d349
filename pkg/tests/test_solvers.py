"""Conjugate gradients and Lanczos"""

import numpy as np
import pytest
from scipy.sparse.linalg import LinearOperator

from src.core.solvers import cg_solve, lanczos, lanczos_solve_other, lanczos_solve_probe
from src.utils.exceptions import DataError, DimensionMismatchError, SolverDivergenceError


def random_spd(rng, n, cond=100.0):
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (U * np.logspace(0, -np.log10(cond), n)) @ U.T


class TestConjugateGradients:

    def test_random_spd_systems(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 40))
            A = random_spd(rng, n)
            b = rng.standard_normal(n)
            result = cg_solve(A, b, tol=1e-10, max_iter=10 * n)
            assert result.converged
            assert np.linalg.norm(A @ result.solution - b) <= 1e-9 * np.linalg.norm(b) * 10
            np.testing.assert_allclose(result.solution, np.linalg.solve(A, b), rtol=1e-6, atol=1e-6)

    def test_matrix_free_operator(self, rng):
        A = random_spd(rng, 20)
        op = LinearOperator((20, 20), matvec=lambda v: A @ v, dtype=np.float64)
        b = rng.standard_normal(20)
        np.testing.assert_allclose(cg_solve(op, b, tol=1e-12).solution, np.linalg.solve(A, b), atol=1e-8)

    def test_zero_rhs(self):
        result = cg_solve(np.eye(3), np.zeros(3))
        assert result.converged and result.iterations == 0
        np.testing.assert_array_equal(result.solution, np.zeros(3))

    def test_indefinite_operator(self):
        with pytest.raises(SolverDivergenceError):
            cg_solve(np.diag([1.0, -1.0]), np.ones(2))

    def test_iteration_cap_returns_best_iterate(self):
        A = np.diag(np.arange(1.0, 101.0))
        result = cg_solve(A, np.ones(100), tol=1e-14, max_iter=3)
        assert not result.converged
        assert result.iterations == 3
        assert 0 < result.relative_residual < 1
        residual = np.linalg.norm(A @ result.solution - 1.0) / 10.0
        assert residual == pytest.approx(result.relative_residual, rel=1e-8)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            cg_solve(np.eye(3), np.ones(4))


class TestLanczos:

    def test_orthogonality_on_ill_conditioned_operator(self, rng):
        A = random_spd(rng, 100, cond=1e10)
        f = lanczos(A, rng.standard_normal(100), k=60)
        k = f.k_effective
        assert np.linalg.norm(f.Q.T @ f.Q - np.eye(k)) < 1e-8

    def test_tridiagonal_relation(self, rng):
        A = random_spd(rng, 30)
        f = lanczos(A, rng.standard_normal(30), k=10)
        np.testing.assert_allclose(f.Q.T @ A @ f.Q, f.T.to_dense(), atol=1e-10)

    def test_full_rank_recovers_spectrum(self):
        A = np.diag(np.arange(1.0, 11.0))
        f = lanczos(A, np.ones(10), k=10)
        assert f.k_effective == 10
        np.testing.assert_allclose(np.linalg.eigvalsh(f.T.to_dense()), np.arange(1.0, 11.0), atol=1e-8)

    def test_ritz_values_lie_within_spectrum(self, rng):
        for _ in range(10):
            A = random_spd(rng, 80, cond=float(rng.uniform(10.0, 1e4)))
            eigenvalues = np.linalg.eigvalsh(A)
            f = lanczos(A, rng.standard_normal(80), k=int(rng.integers(5, 60)))
            ritz = np.linalg.eigvalsh(f.T.to_dense())
            assert ritz.min() >= eigenvalues[0] - 1e-8
            assert ritz.max() <= eigenvalues[-1] + 1e-8

    def test_galerkin_solve_matches_cg_at_equal_iterations(self, rng):
        for _ in range(10):
            n = int(rng.integers(20, 81))
            A = random_spd(rng, n, cond=10.0)
            b = rng.standard_normal(n)
            cg = cg_solve(A, b, tol=1e-8, max_iter=n)
            assert cg.converged
            f = lanczos(A, b, k=cg.iterations)
            lanczos_x = lanczos_solve_probe(f, np.linalg.norm(b))
            assert np.linalg.norm(lanczos_x - cg.solution) <= 1e-5 * np.linalg.norm(cg.solution)

    def test_zero_starting_vector(self):
        with pytest.raises(DataError):
            lanczos(np.eye(4), np.zeros(4), k=2)

    def test_k_capped_at_operator_size(self, rng):
        f = lanczos(random_spd(rng, 10), rng.standard_normal(10), k=50)
        assert f.k_requested == 50
        assert f.k_effective <= 10

    def test_identity_breaks_down_after_one_step(self, rng):
        b = rng.standard_normal(8)
        f = lanczos(np.eye(8), b, k=5)
        assert f.k_effective == 1
        np.testing.assert_allclose(lanczos_solve_probe(f, np.linalg.norm(b)), b, atol=1e-12)

    def test_starting_vector_solve_at_full_rank(self, rng):
        A = random_spd(rng, 15)
        b = rng.standard_normal(15)
        f = lanczos(A, b, k=15)
        np.testing.assert_allclose(lanczos_solve_probe(f, np.linalg.norm(b)), np.linalg.solve(A, b), atol=1e-6)

    def test_residuals_flag_vectors_outside_krylov_space(self):
        A = np.diag([1.0, 2.0, 3.0, 4.0])
        e1, e2 = np.eye(4)[0], np.eye(4)[1]
        f = lanczos(A, e1, k=4)
        assert f.k_effective == 1

        inside = lanczos_solve_other(f, e1, A=A)
        np.testing.assert_allclose(inside.solution, e1, atol=1e-12)
        assert inside.relative_residuals[0] < 1e-12

        outside = lanczos_solve_other(f, e2, A=A)
        np.testing.assert_allclose(outside.solution, np.zeros(4), atol=1e-12)
        assert outside.relative_residuals[0] == pytest.approx(1.0)

    def test_residuals_omitted_without_operator(self, rng):
        f = lanczos(np.eye(3), np.ones(3), k=1)
        assert lanczos_solve_other(f, np.ones((3, 2))).relative_residuals is None
