#!/usr/bin/env python3
"""
Structured Kernel Interpolation Module
Cubic-convolution interpolation onto inducing grids, the KISS-GP operator
``W K_UU W^T + noise * I`` and the predictive mean cache
"""

from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator

from config import config
from .kernels import AdditiveStructure, Grid1D, additive_covariance, as_inputs
from .linalg import (
    InterpMatrix,
    InterpRow,
    ToeplitzColumn,
    interp_apply,
    interp_apply_transpose,
    toeplitz_mvm,
)
from .solvers import cg_solve
from ..utils.exceptions import ConfigError, DimensionMismatchError, OutOfRangeError
from ..utils.logger import get_logger

logger = get_logger(__name__)

# Inputs within this many grid cells outside the interpolable range are snapped onto it
_RANGE_SLACK = 1e-9


def keys_kernel(s: np.ndarray) -> np.ndarray:
    """Keys cubic convolution kernel (a = -1/2), supported on |s| <= 2"""
    s = np.abs(np.asarray(s, dtype=np.float64))
    near = ((1.5 * s - 2.5) * s) * s + 1.0
    far = ((-0.5 * s + 2.5) * s - 4.0) * s + 2.0
    return np.where(s <= 1.0, near, np.where(s <= 2.0, far, 0.0))


def interp_weights_batch(x: np.ndarray, g: Grid1D) -> Tuple[np.ndarray, np.ndarray]:
    """
    Cubic interpolation indices and weights for many points at once

    Returns:
        (indices, weights), both of shape (len(x), 4), for nodes j-1..j+2
        where ``j = floor((x - start) / h)``

    Raises:
        OutOfRangeError: If a point has fewer than 4 grid neighbors
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    s = (x - g.start) / g.spacing
    lo, hi = 1.0, float(g.count - 2)
    bad = ~np.isfinite(s) | (s < lo - _RANGE_SLACK) | (s > hi + _RANGE_SLACK)
    if np.any(bad):
        first = int(np.flatnonzero(bad)[0])
        low, high = g.interpolable_range
        raise OutOfRangeError(
            f"{int(bad.sum())} point(s) outside interpolable range [{low:.6g}, {high:.6g}], "
            f"first at row {first}: x={x[first]!r}"
        )

    s = np.clip(s, lo, hi)
    j = np.minimum(np.floor(s).astype(np.int64), g.count - 3)
    t = s - j
    offsets = np.arange(-1, 3)
    indices = j[:, None] + offsets
    weights = keys_kernel(t[:, None] - offsets)
    return indices, weights


def interp_weights(x: float, g: Grid1D) -> Tuple[np.ndarray, np.ndarray]:
    """Indices and weights of the 4 grid nodes interpolating a single point"""
    indices, weights = interp_weights_batch(np.array([x], dtype=np.float64), g)
    return indices[0], weights[0]


def build_W(X: np.ndarray, structure: AdditiveStructure) -> InterpMatrix:
    """
    Block-stacked interpolation matrix of an additive structure

    Row ``i`` holds 4 nonzeros per component, shifted into that component's
    column range.
    """
    X = as_inputs(X)
    structure.check_dims(X.shape[1])
    offsets = structure.offsets
    all_indices, all_weights = [], []
    for c, (component, offset) in enumerate(zip(structure.components, offsets[:-1])):
        try:
            indices, weights = interp_weights_batch(X[:, component.dim], component.grid)
        except OutOfRangeError as e:
            raise e.with_context(f"component {c}, input dimension {component.dim}") from e
        all_indices.append(indices + offset)
        all_weights.append(weights)
    return InterpMatrix(
        indices=np.concatenate(all_indices, axis=1),
        weights=np.concatenate(all_weights, axis=1),
        cols=structure.m_total,
        n_components=structure.num_components,
    )


def kuu_mvm(columns: Sequence[ToeplitzColumn], v: np.ndarray) -> np.ndarray:
    """Block-diagonal Toeplitz product ``K_UU v`` over additive components"""
    v = np.asarray(v, dtype=np.float64)
    total = sum(col.size for col in columns)
    if v.shape[:1] != (total,):
        raise DimensionMismatchError(f"K_UU is {total}x{total}, operand has shape {v.shape}")
    if len(columns) == 1:
        return toeplitz_mvm(columns[0], v)
    out = np.empty_like(v)
    start = 0
    for col in columns:
        out[start:start + col.size] = toeplitz_mvm(col, v[start:start + col.size])
        start += col.size
    return out


def dense_kuu(columns: Sequence[ToeplitzColumn]) -> np.ndarray:
    """Dense block-diagonal K_UU (oracles only)"""
    return scipy.linalg.block_diag(*[col.to_dense() for col in columns])


@dataclass(frozen=True, eq=False)
class SkiModel:
    """
    A KISS-GP regression model in standardized target space

    ``train_y`` is ``(y - y_mean) / y_std``; kernel hyperparameters and the
    noise variance refer to the standardized targets.
    """

    structure: AdditiveStructure
    W_train: InterpMatrix
    noise: float
    train_X: np.ndarray
    train_y: np.ndarray
    y_mean: float = 0.0
    y_std: float = 1.0
    kuu_columns: Tuple[ToeplitzColumn, ...] = field(init=False, repr=False)

    def __post_init__(self):
        if not (np.isfinite(self.noise) and self.noise > 0):
            raise ConfigError(f"noise variance must be positive, got {self.noise}")
        if not self.y_std > 0:
            raise ConfigError(f"target scale must be positive, got {self.y_std}")
        if self.W_train.rows != np.asarray(self.train_y).size or self.W_train.cols != self.structure.m_total:
            raise DimensionMismatchError(
                f"interpolation matrix {self.W_train.shape} does not match {np.asarray(self.train_y).size} "
                f"targets and {self.structure.m_total} inducing points"
            )
        object.__setattr__(self, 'kuu_columns', tuple(self.structure.kuu_columns()))

    @property
    def n(self) -> int:
        return self.W_train.rows

    @property
    def m_total(self) -> int:
        return self.structure.m_total

    def destandardize(self, y: np.ndarray) -> np.ndarray:
        return self.y_mean + self.y_std * np.asarray(y)


def make_ski_model(X: np.ndarray, y: np.ndarray, structure: AdditiveStructure, noise: float,
                   standardize: bool = True) -> SkiModel:
    """
    Build a SkiModel from raw training data

    Args:
        X: Training inputs (n, D) or (n,)
        y: Training targets
        structure: Additive kernel structure with grids covering X
        noise: Noise variance in standardized units
        standardize: Center and scale ``y``; when False the targets are used as given
    """
    X = as_inputs(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] != y.size:
        raise DimensionMismatchError(f"{X.shape[0]} inputs but {y.size} targets")
    y_mean, y_std = 0.0, 1.0
    if standardize and y.size:
        y_mean = float(np.mean(y))
        y_std = float(np.std(y)) or 1.0
    return SkiModel(
        structure=structure,
        W_train=build_W(X, structure),
        noise=float(noise),
        train_X=X,
        train_y=(y - y_mean) / y_std,
        y_mean=y_mean,
        y_std=y_std,
    )


def ski_mvm(model: SkiModel, v: np.ndarray) -> np.ndarray:
    """``(W K_UU W^T + noise I) v`` through the sparse-Toeplitz-sparse pipeline"""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[:1] != (model.n,):
        raise DimensionMismatchError(f"SKI operator is {model.n}x{model.n}, operand has shape {v.shape}")
    inducing = kuu_mvm(model.kuu_columns, interp_apply_transpose(model.W_train, v))
    return interp_apply(model.W_train, inducing) + model.noise * v


def ski_operator(model: SkiModel) -> LinearOperator:
    """The SKI kernel matrix plus noise as a ``LinearOperator``"""
    return LinearOperator(
        shape=(model.n, model.n),
        matvec=lambda v: ski_mvm(model, v),
        matmat=lambda V: ski_mvm(model, V),
        dtype=np.float64,
    )


def build_mean_cache(model: SkiModel, tol: float = None) -> np.ndarray:
    """``a = K_UU W^T (K_ski + noise I)^{-1} y`` with the inner solve by CG"""
    tol = config.solver.cg_tol if tol is None else tol
    result = cg_solve(ski_operator(model), model.train_y, tol=tol)
    logger.debug(f"Mean cache solve: {result.iterations} CG iterations, residual {result.relative_residual:.2e}")
    return kuu_mvm(model.kuu_columns, interp_apply_transpose(model.W_train, result.solution))


class MeanSource(Protocol):
    a: np.ndarray
    y_mean: float
    y_std: float


@dataclass(frozen=True, eq=False)
class MeanCache:
    """Mean cache ``a`` together with the target standardization constants"""

    a: np.ndarray
    y_mean: float = 0.0
    y_std: float = 1.0

    @classmethod
    def from_model(cls, model: SkiModel, tol: float = None) -> "MeanCache":
        return cls(build_mean_cache(model, tol), model.y_mean, model.y_std)


def predict_mean(cache: MeanSource, w_star: InterpRow) -> float:
    """``mu(x*) = w*^T a``, de-standardized"""
    return float(cache.y_mean + cache.y_std * (cache.a[w_star.indices] @ w_star.weights))


def predict_means(cache: MeanSource, W_star: InterpMatrix) -> np.ndarray:
    """Vectorized ``predict_mean`` over the rows of ``W_star``"""
    return cache.y_mean + cache.y_std * interp_apply(W_star, cache.a)


def ski_covariance(structure: AdditiveStructure, X1: np.ndarray, X2: np.ndarray) -> np.ndarray:
    """SKI kernel matrix ``W_1 K_UU W_2^T`` (dense, for oracles)"""
    W1, W2 = build_W(X1, structure), build_W(X2, structure)
    columns = structure.kuu_columns()
    return np.asarray(W1.csr @ kuu_mvm(columns, W2.to_dense().T))


def dense_ski_covariance(model: SkiModel, W_star: InterpMatrix, X_star: Optional[np.ndarray] = None,
                         prior: str = "exact") -> np.ndarray:
    """
    Dense O(m^2) KISS-GP predictive covariance, the verification oracle for LOVE

    ``K** - w*^T C w*`` with ``C = K_UU W^T (W K_UU W^T + noise I)^{-1} W K_UU``
    formed explicitly. The prior term is the exact kernel (``prior="exact"``,
    needs ``X_star``) or its interpolated version (``prior="ski"``).
    Returned in target units (scaled by ``y_std ** 2``).
    """
    if prior not in ("exact", "ski"):
        raise ConfigError(f"prior must be 'exact' or 'ski', got {prior!r}")
    K_uu = dense_kuu(model.kuu_columns)
    W = model.W_train.to_dense()
    K_hat = W @ K_uu @ W.T + model.noise * np.eye(model.n)
    cross = W @ K_uu
    C = cross.T @ scipy.linalg.cho_solve(scipy.linalg.cho_factor(K_hat, lower=True), cross)

    Ws = W_star.to_dense()
    if prior == "ski":
        K_prior = Ws @ K_uu @ Ws.T
    else:
        if X_star is None:
            raise ConfigError("the exact prior term needs the test inputs")
        K_prior = additive_covariance(model.structure, X_star, X_star)
    return model.y_std ** 2 * (K_prior - Ws @ C @ Ws.T)


def predict_var_from_scratch(model: SkiModel, w_star: InterpRow, prior_var: float,
                             tol: float = None) -> float:
    """
    KISS-GP predictive variance without precomputation

    One CG solve with the SKI operator per query, O(k n + k m log m).
    """
    tol = config.solver.cg_tol if tol is None else tol
    dense_w = np.zeros(model.m_total)
    np.add.at(dense_w, w_star.indices, w_star.weights)
    cross = interp_apply(model.W_train, kuu_mvm(model.kuu_columns, dense_w))
    solve = cg_solve(ski_operator(model), cross, tol=tol)
    return float(model.y_std ** 2 * (prior_var - cross @ solve.solution))

