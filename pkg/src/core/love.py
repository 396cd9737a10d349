#!/usr/bin/env python3
"""
LOVE Module
Lanczos variance estimates: the R/R' predictive covariance cache, the
sampling root S and constant-time test-time queries, plus cache persistence
"""

import json
import os
import threading
import time
from dataclasses import dataclass, replace
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.sparse.linalg import LinearOperator

from config import config
from .kernels import AdditiveStructure, additive_covariance
from .linalg import InterpMatrix, InterpRow, TriDiag, interp_apply, interp_apply_transpose, tridiag_cholesky
from .ski import (
    SkiModel,
    build_W,
    build_mean_cache,
    kuu_mvm,
    predict_mean,
    predict_means,
    ski_operator,
)
from .solvers import lanczos
from ..utils.exceptions import (
    ConfigError,
    DataError,
    NegativeVarianceError,
    PositiveDefinitenessError,
)
from ..utils.helpers import NumpyJSONEncoder
from ..utils.logger import LoggerMixin, get_logger

logger = get_logger(__name__)

CACHE_FORMAT_VERSION = 1


class ClampCounter:
    """Thread-safe count of negative variances clamped to zero"""

    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    def add(self, amount: int = 1):
        with self._lock:
            self._count += amount

    @property
    def count(self) -> int:
        with self._lock:
            return self._count

    def reset(self):
        with self._lock:
            self._count = 0


negative_variance_clamps = ClampCounter()


@dataclass(frozen=True, eq=False)
class LoveCache:
    """
    Everything a query needs, in standardized target space

    ``R`` and ``R_prime`` are (k_effective, m_total) with ``R.T @ R_prime``
    approximating ``K_UU W^T (K_ski + noise I)^{-1} W K_UU``. ``S`` is the
    (m_total, k') sampling root, absent until ``build_sample_cache`` runs.
    """

    a: np.ndarray
    R: np.ndarray
    R_prime: np.ndarray
    S: Optional[np.ndarray] = None
    k: int = 0
    sample_k: int = 0
    y_mean: float = 0.0
    y_std: float = 1.0

    @property
    def k_effective(self) -> int:
        return self.R.shape[0]

    @property
    def m_total(self) -> int:
        return self.R.shape[1]

    def with_sample_root(self, S: np.ndarray, sample_k: int) -> "LoveCache":
        return replace(self, S=S, sample_k=int(sample_k))


def _factor_with_jitter(T: TriDiag, relative_jitter: float, what: str):
    try:
        return tridiag_cholesky(T)
    except PositiveDefinitenessError:
        jitter = relative_jitter * float(np.max(np.abs(T.diag)))
        logger.warning(f"{what} is not positive definite, retrying with jitter {jitter:.3e}")
        return tridiag_cholesky(T.with_jitter(jitter))


def love_precompute(model: SkiModel, k: int = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Predictive covariance cache by k Lanczos iterations

    The probe is the average column of the interpolated kernel,
    ``b = W K_UU 1 / m_total``. With ``K_ski + noise I ≈ Q T Q^T``:
    ``R = (K_UU W^T Q)^T`` and ``R' = T^{-1} R``.

    Args:
        model: KISS-GP model
        k: Lanczos iterations (fewer survive if the Krylov space is exhausted)

    Returns:
        (R, R_prime), both (k_effective, m_total)
    """
    k = config.love.k if k is None else int(k)
    if k < 1:
        raise ConfigError(f"LOVE needs k >= 1, got {k}")

    probe = interp_apply(model.W_train, kuu_mvm(model.kuu_columns, np.ones(model.m_total))) / model.m_total
    factors = lanczos(ski_operator(model), probe, k)
    if factors.k_effective < k:
        logger.info(f"LOVE cache built with k_effective={factors.k_effective} (requested {k})")

    R = kuu_mvm(model.kuu_columns, interp_apply_transpose(model.W_train, factors.Q)).T
    factor = _factor_with_jitter(factors.T, config.oracle.jitter, "Lanczos tridiagonal T")
    R_prime = factor.solve(R)
    return np.ascontiguousarray(R), np.ascontiguousarray(R_prime)


def _project(M: np.ndarray, W_star: InterpMatrix) -> np.ndarray:
    """Rows ``M w*_i`` for every row of ``W_star``, shape (t, k)"""
    return np.einsum('ktj,tj->tk', M[:, W_star.indices], W_star.weights)


def _clamp_variances(values: np.ndarray, prior: np.ndarray) -> np.ndarray:
    """Clamp small negative variances (standardized units) to zero"""
    negative = values < 0
    if not np.any(negative):
        return values
    limit = config.love.negative_variance_tol * np.maximum(np.abs(prior), np.finfo(float).tiny)
    beyond = negative & (values < -limit)
    if np.any(beyond):
        worst = int(np.argmin(values))
        raise NegativeVarianceError(
            f"predictive variance {values[worst]:.3e} is below -{config.love.negative_variance_tol:g} * prior; "
            f"increase k"
        )
    noticeable = negative & (values < -config.love.clamp_tol)
    count = int(negative.sum())
    negative_variance_clamps.add(count)
    if np.any(noticeable):
        logger.warning(f"Clamped {count} negative predictive variance(s) to zero (min {values.min():.3e})")
    return np.where(negative, 0.0, values)


def predict_covar(cache: LoveCache, w_i: InterpRow, w_j: InterpRow, prior_cov: float) -> float:
    """
    LOVE predictive covariance ``k(x_i, x_j) - (R w_i)^T (R' w_j)``

    ``prior_cov`` is the standardized-space prior covariance; the result is
    returned in target units. When ``w_i`` and ``w_j`` are the same row the
    value is treated as a variance and clamped per the negative-variance policy.
    """
    left = cache.R[:, w_i.indices] @ w_i.weights
    right = cache.R_prime[:, w_j.indices] @ w_j.weights
    value = prior_cov - left @ right
    same_row = (w_i.indices is w_j.indices and w_i.weights is w_j.weights) or (
        np.array_equal(w_i.indices, w_j.indices) and np.array_equal(w_i.weights, w_j.weights)
    )
    if same_row:
        value = float(_clamp_variances(np.array([value]), np.array([prior_cov]))[0])
    return float(cache.y_std ** 2 * value)


def predict_variances(cache: LoveCache, W_star: InterpMatrix, prior_vars) -> np.ndarray:
    """Vectorized LOVE variances for every row of ``W_star``, O(t k d)"""
    prior = np.broadcast_to(np.asarray(prior_vars, dtype=np.float64), (W_star.rows,))
    reduced = np.sum(_project(cache.R, W_star) * _project(cache.R_prime, W_star), axis=1)
    return cache.y_std ** 2 * _clamp_variances(prior - reduced, prior)


def predict_covariance_matrix(cache: LoveCache, W_star: InterpMatrix, prior_cov: np.ndarray) -> np.ndarray:
    """Full (t, t) LOVE predictive covariance for the rows of ``W_star``"""
    prior_cov = np.asarray(prior_cov, dtype=np.float64)
    if prior_cov.shape != (W_star.rows, W_star.rows):
        raise DataError(f"prior covariance must be {W_star.rows}x{W_star.rows}, got {prior_cov.shape}")
    covariance = prior_cov - _project(cache.R, W_star) @ _project(cache.R_prime, W_star).T
    diagonal = _clamp_variances(np.diag(covariance).copy(), np.diag(prior_cov))
    np.fill_diagonal(covariance, diagonal)
    return cache.y_std ** 2 * covariance


def build_sample_cache(model: SkiModel, love: LoveCache, sample_k: int = None) -> np.ndarray:
    """
    Low-rank root ``S`` of the inducing-point posterior covariance

    Lanczos runs on ``v -> K_UU v - R^T (R' v)`` from the operator applied to
    the normalized all-ones vector; with ``Q' T' Q'^T`` and ``T' = L L^T``,
    ``S = Q' L``.

    Returns:
        S of shape (m_total, k'_effective)

    Raises:
        PositiveDefinitenessError: If T' stays indefinite after jitter
    """
    sample_k = config.love.sample_k if sample_k is None else int(sample_k)
    if sample_k < 1:
        raise ConfigError(f"sampling cache needs k' >= 1, got {sample_k}")
    m = model.m_total
    columns, R, R_prime = model.kuu_columns, love.R, love.R_prime

    def residual_mvm(v):
        return kuu_mvm(columns, v) - R.T @ (R_prime @ v)

    operator = LinearOperator((m, m), matvec=residual_mvm, matmat=residual_mvm, dtype=np.float64)
    probe = residual_mvm(np.ones(m) / np.sqrt(m))
    if not np.any(probe):
        logger.warning("Posterior inducing covariance vanishes on the probe; sampling root is zero")
        return np.zeros((m, 1))

    factors = lanczos(operator, probe, sample_k)
    try:
        factor = _factor_with_jitter(factors.T, config.love.sample_jitter, "Sampling tridiagonal T'")
    except PositiveDefinitenessError as e:
        raise PositiveDefinitenessError(
            f"K_UU - R^T R' is too indefinite to sample from; rebuild the cache with a larger k ({e})"
        ) from e
    return factors.Q @ factor.to_dense()


def sample_posterior(mean_cache, S: np.ndarray, W_star: InterpMatrix, s: int, seed: Optional[int] = None,
                     noise: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Draw ``s`` joint posterior samples at the rows of ``W_star``

    Each column is ``mu(X*) + y_std * W* S v`` with ``v ~ N(0, I_k')`` from a
    generator seeded per call. ``noise`` replaces the draws with a fixed
    (k', s) matrix.

    Returns:
        Samples of shape (t, s) in target units
    """
    if s < 1:
        raise ConfigError(f"need at least one sample, got {s}")
    if noise is None:
        noise = np.random.default_rng(seed).standard_normal((S.shape[1], s))
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != (S.shape[1], s):
        raise DataError(f"noise must have shape {(S.shape[1], s)}, got {noise.shape}")
    mean = predict_means(mean_cache, W_star)
    return mean[:, None] + mean_cache.y_std * interp_apply(W_star, S @ noise)


def sample_covariance(cache: LoveCache, W_star: InterpMatrix) -> np.ndarray:
    """Covariance ``y_std^2 W* S S^T W*^T`` implied by the sampling root"""
    if cache.S is None:
        raise ConfigError("the cache has no sampling root")
    projected = interp_apply(W_star, cache.S)
    return cache.y_std ** 2 * projected @ projected.T


class LovePredictor(LoggerMixin):
    """
    Fitted KISS-GP model with LOVE caches for fast predictive queries

    Build with ``from_model`` (precompute) or ``load_cache`` (query only).
    Sampling caches are built lazily when the model is available.
    """

    def __init__(self, structure: AdditiveStructure, noise: float, cache: LoveCache,
                 model: Optional[SkiModel] = None, timings: Optional[Dict[str, float]] = None,
                 metadata: Optional[Dict[str, Any]] = None):
        self.structure = structure
        self.noise = float(noise)
        self.cache = cache
        self.model = model
        self.timings = dict(timings or {})
        self.metadata = dict(metadata or {})
        self._lock = threading.Lock()

    @classmethod
    def from_model(cls, model: SkiModel, k: int = None, sample_k: Optional[int] = None) -> "LovePredictor":
        """Run mean and variance precomputation, and the sampling root if ``sample_k`` is given"""
        timings = {}
        start = time.perf_counter()
        a = build_mean_cache(model)
        timings['mean_cache_s'] = time.perf_counter() - start

        start = time.perf_counter()
        R, R_prime = love_precompute(model, k)
        timings['variance_cache_s'] = time.perf_counter() - start

        cache = LoveCache(a=a, R=R, R_prime=R_prime, k=config.love.k if k is None else int(k),
                          y_mean=model.y_mean, y_std=model.y_std)
        predictor = cls(model.structure, model.noise, cache, model=model, timings=timings)
        if sample_k is not None:
            predictor.ensure_sample_cache(sample_k)
        predictor.logger.info(
            f"LOVE precompute done: n={model.n}, m={model.m_total}, k_effective={cache.k_effective}, "
            f"{sum(timings.values()):.3f}s"
        )
        return predictor

    def ensure_sample_cache(self, sample_k: int = None) -> LoveCache:
        """Build the sampling root once; later calls reuse it"""
        with self._lock:
            if self.cache.S is None:
                if self.model is None:
                    raise ConfigError("the loaded cache has no sampling root and no training data to build one")
                sample_k = config.love.sample_k if sample_k is None else int(sample_k)
                start = time.perf_counter()
                S = build_sample_cache(self.model, self.cache, sample_k)
                self.timings['sample_cache_s'] = time.perf_counter() - start
                self.cache = self.cache.with_sample_root(S, sample_k)
            return self.cache

    def interp(self, X: np.ndarray) -> InterpMatrix:
        return build_W(X, self.structure)

    def mean(self, X: np.ndarray) -> np.ndarray:
        return predict_means(self.cache, self.interp(X))

    def mean_at(self, w_star: InterpRow) -> float:
        return predict_mean(self.cache, w_star)

    def variance(self, X: np.ndarray) -> np.ndarray:
        return predict_variances(self.cache, self.interp(X), self.structure.prior_variance())

    def covariance(self, X: np.ndarray) -> np.ndarray:
        return predict_covariance_matrix(self.cache, self.interp(X), additive_covariance(self.structure, X, X))

    def sample(self, X: np.ndarray, s: int, seed: Optional[int] = None) -> np.ndarray:
        cache = self.ensure_sample_cache()
        return sample_posterior(cache, cache.S, self.interp(X), s, seed)


def save_cache(path: str, predictor: LovePredictor) -> str:
    """
    Write a predictor's caches and configuration to a versioned ``.npz`` file

    Returns:
        The path written
    """
    cache = predictor.cache
    metadata: Dict[str, Any] = {
        'format_version': CACHE_FORMAT_VERSION,
        'structure': predictor.structure.to_dict(),
        'noise': predictor.noise,
        'k': cache.k,
        'sample_k': cache.sample_k,
        'y_mean': cache.y_mean,
        'y_std': cache.y_std,
        'extra': predictor.metadata,
    }
    arrays = {'a': cache.a, 'R': cache.R, 'R_prime': cache.R_prime}
    if cache.S is not None:
        arrays['S'] = cache.S

    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'wb') as f:
        np.savez_compressed(f, metadata=np.array(json.dumps(metadata, cls=NumpyJSONEncoder)), **arrays)
    logger.info(f"Saved LOVE cache to {path}")
    return path


def load_cache(path: str) -> LovePredictor:
    """
    Load a predictor written by ``save_cache``

    Raises:
        DataError: If the file is missing, unreadable or of another format version
    """
    if not os.path.exists(path):
        raise DataError(f"cache file not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as data:
            metadata = json.loads(str(data['metadata']))
            arrays = {name: data[name] for name in ('a', 'R', 'R_prime', 'S') if name in data.files}
    except (OSError, ValueError, KeyError) as e:
        raise DataError(f"cannot read cache {path}: {e}") from e

    version = metadata.get('format_version')
    if version != CACHE_FORMAT_VERSION:
        raise DataError(f"cache {path} has format version {version}, expected {CACHE_FORMAT_VERSION}")

    cache = LoveCache(
        a=arrays['a'],
        R=arrays['R'],
        R_prime=arrays['R_prime'],
        S=arrays.get('S'),
        k=int(metadata['k']),
        sample_k=int(metadata['sample_k']),
        y_mean=float(metadata['y_mean']),
        y_std=float(metadata['y_std']),
    )
    structure = AdditiveStructure.from_dict(metadata['structure'])
    if cache.a.shape != (structure.m_total,) or cache.R.shape[1] != structure.m_total:
        raise DataError(f"cache {path} does not match its structure ({structure.m_total} inducing points)")
    logger.info(f"Loaded LOVE cache from {path} (k_effective={cache.k_effective})")
    return LovePredictor(structure, metadata['noise'], cache, metadata=metadata.get('extra'))
