#!/usr/bin/env python3
"""
Linear Algebra Core Module
Structured and dense primitives: symmetric Toeplitz MVMs through circulant
embedding, tridiagonal and dense Cholesky factorizations, and sparse
interpolation-matrix products
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse

from config import config
from ..utils.exceptions import DataError, DimensionMismatchError, PositiveDefinitenessError
from ..utils.logger import get_logger

logger = get_logger(__name__)


def _next_power_of_two(size: int) -> int:
    return 1 << max(0, int(size) - 1).bit_length()


@dataclass(frozen=True, eq=False)
class ToeplitzColumn:
    """
    First column of a symmetric Toeplitz matrix, ``T[i, j] = col[|i - j|]``

    The circulant embedding spectrum is computed once on construction so every
    MVM costs two real FFTs of length ``2 ** ceil(log2(2m - 1))``.
    """

    col: np.ndarray
    _fft_size: int = field(init=False, repr=False, compare=False)
    _spectrum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        col = np.asarray(self.col, dtype=np.float64)
        if col.ndim != 1 or col.size < 1:
            raise DimensionMismatchError(f"Toeplitz column must be a non-empty vector, got shape {col.shape}")
        if not np.all(np.isfinite(col)):
            raise DataError("Toeplitz column contains non-finite entries")

        m = col.size
        fft_size = _next_power_of_two(2 * m - 1)
        # Circulant symbol: col, zero padding, then the mirrored tail col[m-1..1]
        symbol = np.zeros(fft_size)
        symbol[:m] = col
        if m > 1:
            symbol[-(m - 1):] = col[:0:-1]

        object.__setattr__(self, 'col', col)
        object.__setattr__(self, '_fft_size', fft_size)
        object.__setattr__(self, '_spectrum', np.fft.rfft(symbol))

    @property
    def size(self) -> int:
        return self.col.size

    def to_dense(self) -> np.ndarray:
        """Densify (for tests and dense oracles only)"""
        return scipy.linalg.toeplitz(self.col)


@dataclass(frozen=True, eq=False)
class TriDiag:
    """Symmetric tridiagonal matrix stored as its diagonal and off-diagonal"""

    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        diag = np.asarray(self.diag, dtype=np.float64).reshape(-1)
        offdiag = np.asarray(self.offdiag, dtype=np.float64).reshape(-1)
        if diag.size < 1 or offdiag.size != diag.size - 1:
            raise DimensionMismatchError(
                f"TriDiag needs k >= 1 diagonal and k - 1 off-diagonal entries, got {diag.size} and {offdiag.size}"
            )
        object.__setattr__(self, 'diag', diag)
        object.__setattr__(self, 'offdiag', offdiag)

    @property
    def size(self) -> int:
        return self.diag.size

    def banded(self) -> np.ndarray:
        """Lower banded storage understood by ``scipy.linalg.cholesky_banded``"""
        ab = np.zeros((2, self.size))
        ab[0] = self.diag
        ab[1, :-1] = self.offdiag
        return ab

    def with_jitter(self, jitter: float) -> "TriDiag":
        return TriDiag(self.diag + jitter, self.offdiag)

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)


@dataclass(frozen=True, eq=False)
class BidiagFactor:
    """Lower bidiagonal Cholesky factor ``L`` with ``L @ L.T == T``"""

    diag: np.ndarray
    offdiag: np.ndarray

    def banded(self) -> np.ndarray:
        cb = np.zeros((2, self.diag.size))
        cb[0] = self.diag
        cb[1, :-1] = self.offdiag
        return cb

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.offdiag, -1)

    def solve(self, B: np.ndarray) -> np.ndarray:
        """Solve ``(L L^T) X = B``"""
        B = np.asarray(B, dtype=np.float64)
        if B.shape[0] != self.diag.size:
            raise DimensionMismatchError(f"Right-hand side has {B.shape[0]} rows, factor has {self.diag.size}")
        return scipy.linalg.cho_solve_banded((self.banded(), True), B)


class InterpRow(NamedTuple):
    """Sparse interpolation vector ``w_x``: column indices and weights"""
    indices: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True, eq=False)
class InterpMatrix:
    """
    Row-sparse interpolation matrix with a fixed number of nonzeros per row

    ``indices[i]`` and ``weights[i]`` list the (column, weight) pairs of row
    ``i``; a model with ``d`` additive components has ``4 * d`` of them.
    """

    indices: np.ndarray
    weights: np.ndarray
    cols: int
    n_components: int = 1
    _csr: scipy.sparse.csr_matrix = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        indices = np.asarray(self.indices, dtype=np.int64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if indices.ndim != 2 or indices.shape != weights.shape:
            raise DimensionMismatchError(
                f"indices {indices.shape} and weights {weights.shape} must be equal 2-D shapes"
            )
        if indices.size and (indices.min() < 0 or indices.max() >= self.cols):
            raise DimensionMismatchError(f"column indices must lie in [0, {self.cols})")

        rows, nnz = indices.shape
        csr = scipy.sparse.csr_matrix(
            (weights.ravel(), indices.ravel(), np.arange(0, rows * nnz + 1, nnz)),
            shape=(rows, self.cols),
        )
        object.__setattr__(self, 'indices', indices)
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, '_csr', csr)

    @property
    def rows(self) -> int:
        return self.indices.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def csr(self) -> scipy.sparse.csr_matrix:
        return self._csr

    def row(self, i: int) -> InterpRow:
        return InterpRow(self.indices[i], self.weights[i])

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()


def toeplitz_mvm(col: ToeplitzColumn, v: np.ndarray) -> np.ndarray:
    """
    Multiply the symmetric Toeplitz matrix of ``col`` with ``v``

    Args:
        col: First column of the Toeplitz matrix
        v: Vector of length m, or an (m, p) block of columns

    Returns:
        ``T @ v`` with the shape of ``v``
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape[:1] != (col.size,):
        raise DimensionMismatchError(f"Toeplitz operator is {col.size}x{col.size}, vector has shape {v.shape}")

    size = col._fft_size
    spectrum = col._spectrum if v.ndim == 1 else col._spectrum.reshape((-1,) + (1,) * (v.ndim - 1))
    product = np.fft.irfft(spectrum * np.fft.rfft(v, n=size, axis=0), n=size, axis=0)
    return product[:col.size]


def tridiag_cholesky(T: TriDiag) -> BidiagFactor:
    """
    Cholesky factor of a symmetric positive definite tridiagonal matrix

    Args:
        T: Tridiagonal matrix

    Returns:
        Lower bidiagonal factor

    Raises:
        PositiveDefinitenessError: If a pivot is not positive
    """
    if not (np.all(np.isfinite(T.diag)) and np.all(np.isfinite(T.offdiag))):
        raise PositiveDefinitenessError("tridiagonal matrix has non-finite entries")
    try:
        cb = scipy.linalg.cholesky_banded(T.banded(), lower=True)
    except np.linalg.LinAlgError as e:
        raise PositiveDefinitenessError(f"tridiagonal matrix is not positive definite: {e}") from e
    return BidiagFactor(diag=cb[0].copy(), offdiag=cb[1, :-1].copy())


def tridiag_solve(T: TriDiag, B: np.ndarray) -> np.ndarray:
    """
    Solve ``T X = B`` through the bidiagonal Cholesky factor, O(k p)

    Args:
        T: Symmetric positive definite tridiagonal matrix
        B: Right-hand side(s), shape (k,) or (k, p)

    Returns:
        Solution with the shape of ``B``
    """
    return tridiag_cholesky(T).solve(B)


def cholesky_with_jitter(A: np.ndarray,
                         jitter: float = None,
                         max_tries: int = None) -> Tuple[np.ndarray, float]:
    """
    Dense Cholesky factorization with escalating diagonal jitter

    A plain factorization is tried first. On failure ``jitter * mean(diag(A))``
    is added and escalated by a factor 10 up to ``max_tries`` more times.

    Returns:
        (L, added_jitter) with ``L @ L.T == A + added_jitter * I``

    Raises:
        PositiveDefinitenessError: If every attempt fails
    """
    jitter = config.oracle.jitter if jitter is None else jitter
    max_tries = config.oracle.max_jitter_tries if max_tries is None else max_tries

    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatchError(f"Cholesky needs a square matrix, got shape {A.shape}")
    if A.shape[0] == 0:
        return np.zeros((0, 0)), 0.0
    if not np.all(np.isfinite(A)):
        raise PositiveDefinitenessError("matrix has non-finite entries")

    scale = float(np.mean(np.diag(A)))
    if not scale > 0:
        scale = 1.0

    added = 0.0
    for attempt in range(max_tries + 2):
        try:
            L = scipy.linalg.cholesky(A + added * np.eye(A.shape[0]), lower=True)
            if added:
                logger.debug(f"Cholesky succeeded with jitter {added:.3e}")
            return L, added
        except np.linalg.LinAlgError:
            added = jitter * scale * (10.0 ** attempt)
            if attempt <= max_tries:
                logger.debug(f"Cholesky failed, retrying with jitter {added:.3e}")

    raise PositiveDefinitenessError(
        f"matrix is not positive definite after jitter up to {jitter * scale * 10.0 ** max_tries:.3e}"
    )


def dense_cholesky(A: np.ndarray) -> np.ndarray:
    """Lower triangular ``L`` with ``L @ L.T == A + jitter * I`` (see ``cholesky_with_jitter``)"""
    return cholesky_with_jitter(A)[0]


def interp_apply(W: InterpMatrix, v: np.ndarray) -> np.ndarray:
    """``W @ v`` for a vector (cols,) or block (cols, p)"""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[:1] != (W.cols,):
        raise DimensionMismatchError(f"interpolation matrix has {W.cols} columns, operand has shape {v.shape}")
    return np.asarray(W.csr @ v)


def interp_apply_transpose(W: InterpMatrix, v: np.ndarray) -> np.ndarray:
    """``W.T @ v`` for a vector (rows,) or block (rows, p)"""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[:1] != (W.rows,):
        raise DimensionMismatchError(f"interpolation matrix has {W.rows} rows, operand has shape {v.shape}")
    return np.asarray(W.csr.T @ v)
