"""Structured and dense linear algebra primitives"""

import numpy as np
import pytest
import scipy.linalg

from src.core.linalg import (
    InterpMatrix,
    ToeplitzColumn,
    TriDiag,
    cholesky_with_jitter,
    dense_cholesky,
    interp_apply,
    interp_apply_transpose,
    toeplitz_mvm,
    tridiag_cholesky,
    tridiag_solve,
)
from src.utils.exceptions import DataError, DimensionMismatchError, PositiveDefinitenessError


class TestToeplitzMvm:

    @pytest.mark.parametrize("m", [1, 2, 3, 7, 64, 100])
    def test_matches_dense(self, m, rng):
        col = ToeplitzColumn(rng.standard_normal(m))
        v = rng.standard_normal(m)
        np.testing.assert_allclose(toeplitz_mvm(col, v), scipy.linalg.toeplitz(col.col) @ v, atol=1e-10)

    def test_block_of_columns(self, rng):
        col = ToeplitzColumn(np.exp(-0.1 * np.arange(20)))
        V = rng.standard_normal((20, 3))
        np.testing.assert_allclose(toeplitz_mvm(col, V), col.to_dense() @ V, atol=1e-10)

    def test_single_entry_scales(self):
        col = ToeplitzColumn(np.array([2.5]))
        np.testing.assert_allclose(toeplitz_mvm(col, np.array([4.0])), [10.0])

    def test_identity_column(self, rng):
        col = ToeplitzColumn(np.r_[1.0, np.zeros(9)])
        v = rng.standard_normal(10)
        np.testing.assert_allclose(toeplitz_mvm(col, v), v, atol=1e-12)

    def test_wrong_length(self):
        col = ToeplitzColumn(np.ones(5))
        with pytest.raises(DimensionMismatchError):
            toeplitz_mvm(col, np.ones(4))

    def test_rejects_empty_column(self):
        with pytest.raises(DimensionMismatchError):
            ToeplitzColumn(np.zeros(0))

    def test_rejects_non_finite_column(self):
        with pytest.raises(DataError) as excinfo:
            ToeplitzColumn(np.array([1.0, np.inf, 0.5]))
        assert excinfo.value.exit_code == 4


class TestTridiagonal:

    def test_cholesky_reconstructs(self, rng):
        k = 12
        T = TriDiag(4.0 + rng.uniform(size=k), rng.uniform(-1, 1, size=k - 1))
        L = tridiag_cholesky(T).to_dense()
        np.testing.assert_allclose(L @ L.T, T.to_dense(), atol=1e-12)
        assert np.allclose(L, np.tril(L))

    def test_solve_matches_dense(self, rng):
        k = 8
        T = TriDiag(3.0 + rng.uniform(size=k), rng.uniform(-1, 1, size=k - 1))
        B = rng.standard_normal((k, 4))
        np.testing.assert_allclose(tridiag_solve(T, B), np.linalg.solve(T.to_dense(), B), atol=1e-10)

    def test_scalar_system(self):
        T = TriDiag(np.array([4.0]), np.zeros(0))
        np.testing.assert_allclose(tridiag_solve(T, np.array([2.0])), [0.5])

    def test_indefinite_raises(self):
        T = TriDiag(np.array([1.0, 1.0]), np.array([2.0]))
        with pytest.raises(PositiveDefinitenessError):
            tridiag_cholesky(T)

    def test_shape_validation(self):
        with pytest.raises(DimensionMismatchError):
            TriDiag(np.ones(3), np.ones(3))


class TestDenseCholesky:

    def test_positive_definite_needs_no_jitter(self, rng):
        B = rng.standard_normal((6, 6))
        A = B @ B.T + 6 * np.eye(6)
        L, added = cholesky_with_jitter(A)
        assert added == 0.0
        np.testing.assert_allclose(L @ L.T, A, atol=1e-10)

    def test_singular_gets_jitter(self):
        A = np.ones((3, 3))
        L, added = cholesky_with_jitter(A)
        assert added > 0
        np.testing.assert_allclose(L @ L.T, A + added * np.eye(3), atol=1e-10)

    def test_dense_cholesky_returns_factor(self, rng):
        B = rng.standard_normal((5, 5))
        A = B @ B.T + np.eye(5)
        L = dense_cholesky(A)
        assert np.allclose(L, np.tril(L))
        np.testing.assert_allclose(L @ L.T, A, atol=1e-10)

    def test_negative_definite_fails(self):
        with pytest.raises(PositiveDefinitenessError):
            cholesky_with_jitter(-np.eye(3))

    def test_non_finite_fails(self):
        with pytest.raises(PositiveDefinitenessError):
            cholesky_with_jitter(np.array([[np.nan, 0.0], [0.0, 1.0]]))


class TestInterpMatrix:

    def _random_matrix(self, rng, rows=15, cols=10, nnz=4):
        indices = np.stack([rng.choice(cols, size=nnz, replace=False) for _ in range(rows)])
        return InterpMatrix(indices, rng.standard_normal((rows, nnz)), cols)

    def test_adjoint(self, rng):
        W = self._random_matrix(rng)
        u, v = rng.standard_normal(W.cols), rng.standard_normal(W.rows)
        assert abs(interp_apply(W, u) @ v - u @ interp_apply_transpose(W, v)) < 1e-12

    def test_matches_dense(self, rng):
        W = self._random_matrix(rng)
        U = rng.standard_normal((W.cols, 3))
        np.testing.assert_allclose(interp_apply(W, U), W.to_dense() @ U, atol=1e-12)

    def test_row(self, rng):
        W = self._random_matrix(rng)
        row = W.row(3)
        assert row.indices.shape == (4,) and row.weights.shape == (4,)
        dense_row = np.zeros(W.cols)
        np.add.at(dense_row, row.indices, row.weights)
        np.testing.assert_allclose(dense_row, W.to_dense()[3])

    def test_column_out_of_range(self):
        with pytest.raises(DimensionMismatchError):
            InterpMatrix(np.array([[0, 5]]), np.array([[0.5, 0.5]]), cols=5)

    def test_operand_shape_checked(self, rng):
        W = self._random_matrix(rng)
        with pytest.raises(ValueError):
            interp_apply(W, np.ones(W.cols + 1))
        with pytest.raises(DimensionMismatchError):
            interp_apply_transpose(W, np.ones(W.rows - 1))
