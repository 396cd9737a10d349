#!/usr/bin/env python3
"""
Exact GP Module
Dense Cholesky-based Gaussian process posterior, sampling, marginal
likelihood and a desk-scale ADAM hyperparameter fitter. Ground truth for
the scalable paths.
"""

from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
import scipy.linalg

from config import config
from .kernels import AdditiveStructure, additive_covariance, as_inputs
from .linalg import cholesky_with_jitter
from .ski import ski_covariance
from ..utils.exceptions import ConfigError, DimensionMismatchError, NumericalError
from ..utils.logger import get_logger

logger = get_logger(__name__)

CovarianceFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]
KernelLike = Union[AdditiveStructure, CovarianceFunction]

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class ExactPosterior:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def variance(self) -> np.ndarray:
        return np.diag(self.cov).copy()


def covariance_function(structure: AdditiveStructure, kind: str = "exact") -> CovarianceFunction:
    """
    Covariance callable for a structure

    ``kind="exact"`` evaluates the kernels directly, ``kind="ski"`` through the
    inducing grids (``w_i^T K_UU w_j``).
    """
    if kind == "exact":
        return lambda X1, X2: additive_covariance(structure, X1, X2)
    if kind == "ski":
        return lambda X1, X2: ski_covariance(structure, X1, X2)
    raise ConfigError(f"unknown covariance kind {kind!r}")


def _as_covariance(kernel: KernelLike) -> CovarianceFunction:
    if isinstance(kernel, AdditiveStructure):
        return covariance_function(kernel)
    if callable(kernel):
        return kernel
    raise ConfigError(f"kernel must be an AdditiveStructure or a callable, got {type(kernel).__name__}")


def _check_dense_limit(n: int, dense_limit: Optional[int]):
    limit = config.oracle.dense_limit if dense_limit is None else dense_limit
    if n > limit:
        raise ConfigError(f"exact GP limited to {limit} training points, got {n}; raise the dense limit to override")


def _prepare(X, y, noise: float) -> Tuple[np.ndarray, np.ndarray]:
    X = as_inputs(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] != y.size:
        raise DimensionMismatchError(f"{X.shape[0]} inputs but {y.size} targets")
    if not noise >= 0:
        raise ConfigError(f"noise variance must be non-negative, got {noise}")
    return X, y


def exact_posterior(X, y, kernel: KernelLike, noise: float, X_star,
                    dense_limit: Optional[int] = None) -> ExactPosterior:
    """
    Posterior mean and covariance of the latent function at ``X_star``

    ``mean = K*X (K + noise I)^{-1} y`` and
    ``cov = K** - K*X (K + noise I)^{-1} KX*``, through a jittered Cholesky.
    With no training data the prior is returned.
    """
    X, y = _prepare(X, y, noise)
    X_star = as_inputs(X_star)
    _check_dense_limit(X.shape[0], dense_limit)
    covariance = _as_covariance(kernel)

    K_ss = covariance(X_star, X_star)
    if X.shape[0] == 0:
        return ExactPosterior(np.zeros(X_star.shape[0]), K_ss)

    K_hat = covariance(X, X) + noise * np.eye(X.shape[0])
    L, added = cholesky_with_jitter(K_hat)
    if added:
        logger.info(f"Exact posterior Cholesky needed jitter {added:.3e}")
    K_xs = covariance(X, X_star)
    alpha = scipy.linalg.cho_solve((L, True), y)
    V = scipy.linalg.solve_triangular(L, K_xs, lower=True)
    cov = K_ss - V.T @ V
    return ExactPosterior(K_xs.T @ alpha, 0.5 * (cov + cov.T))


def exact_sample(p: ExactPosterior, s: int, seed: Optional[int] = None) -> np.ndarray:
    """
    Posterior samples ``mean + L v`` with ``L`` the (jittered) Cholesky factor

    Returns:
        (t, s) matrix of samples
    """
    if s < 1:
        raise ConfigError(f"need at least one sample, got {s}")
    mean = np.asarray(p.mean, dtype=np.float64)
    if not np.any(p.cov):
        return np.repeat(mean[:, None], s, axis=1)
    L, _ = cholesky_with_jitter(p.cov)
    rng = np.random.default_rng(seed)
    return mean[:, None] + L @ rng.standard_normal((mean.size, s))


def log_marginal_likelihood(X, y, kernel: KernelLike, noise: float,
                            dense_limit: Optional[int] = None) -> float:
    """``-y^T K^{-1} y / 2 - log|K| / 2 - n log(2 pi) / 2`` with ``K = K_XX + noise I``"""
    X, y = _prepare(X, y, noise)
    _check_dense_limit(X.shape[0], dense_limit)
    n = y.size
    if n == 0:
        return 0.0
    K_hat = _as_covariance(kernel)(X, X) + noise * np.eye(n)
    L, _ = cholesky_with_jitter(K_hat)
    alpha = scipy.linalg.cho_solve((L, True), y)
    return float(-0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * _LOG_2PI)


def predictive_log_likelihood(mean, var, y, noise: float = 0.0) -> float:
    """
    Log density of test targets under independent Gaussian predictions

    Args:
        mean: Predictive means
        var: Predictive latent variances
        y: Observed test targets
        noise: Observation noise added to every variance

    Returns:
        Summed log density
    """
    mean, var, y = (np.asarray(a, dtype=np.float64).ravel() for a in (mean, var, y))
    if not (mean.size == var.size == y.size):
        raise DimensionMismatchError(f"lengths differ: {mean.size}, {var.size}, {y.size}")
    total = np.maximum(var + noise, np.finfo(float).tiny)
    return float(np.sum(-0.5 * (_LOG_2PI + np.log(total) + (y - mean) ** 2 / total)))


def _objective(X, y, structure: AdditiveStructure, theta: np.ndarray, dense_limit) -> float:
    try:
        candidate = structure.from_vector(theta[:-1])
        return log_marginal_likelihood(X, y, candidate, float(np.exp(theta[-1])), dense_limit)
    except (NumericalError, ConfigError, FloatingPointError):
        return -np.inf


def finite_difference_gradient(func: Callable[[np.ndarray], float], theta: np.ndarray,
                               step: float = None) -> np.ndarray:
    """Central differences; components with a non-finite side are zero"""
    step = config.oracle.fd_step if step is None else step
    gradient = np.zeros_like(theta)
    for i in range(theta.size):
        offset = np.zeros_like(theta)
        offset[i] = step
        upper, lower = func(theta + offset), func(theta - offset)
        if np.isfinite(upper) and np.isfinite(lower):
            gradient[i] = (upper - lower) / (2.0 * step)
    return gradient


def fit_hyperparameters(X, y, kernel_init: AdditiveStructure, noise_init: float, steps: int = 100,
                        lr: float = 0.1, noise_floor: float = None, dense_limit: Optional[int] = None,
                        history: Optional[List[float]] = None) -> Tuple[AdditiveStructure, float]:
    """
    Maximize the exact log marginal likelihood with ADAM

    Parameters live in log-space (spectral-mixture means raw), gradients are
    central finite differences. The best parameters seen are returned.

    Args:
        X: Training inputs
        y: Training targets (standardized)
        kernel_init: Starting kernels and grids
        noise_init: Starting noise variance, clipped to the noise floor
        steps: ADAM steps (0 returns the initialization)
        lr: Learning rate
        noise_floor: Lower bound on the noise variance
        history: Optional list receiving the best objective after every step

    Returns:
        (structure, noise)

    Raises:
        NumericalError: If the objective is not finite at the initialization
    """
    X, y = _prepare(X, y, noise_init)
    _check_dense_limit(X.shape[0], dense_limit)
    if steps <= 0:
        return kernel_init, float(noise_init)

    noise_floor = config.oracle.noise_floor if noise_floor is None else noise_floor
    log_floor = np.log(noise_floor)
    theta = np.concatenate([kernel_init.to_vector(), [np.log(max(noise_init, noise_floor))]])

    def objective(t: np.ndarray) -> float:
        return _objective(X, y, kernel_init, t, dense_limit)

    best_value = objective(theta)
    if not np.isfinite(best_value):
        raise NumericalError("log marginal likelihood is not finite at the initial hyperparameters")
    best_theta = theta.copy()

    beta1, beta2, eps = 0.9, 0.999, 1e-8
    first, second = np.zeros_like(theta), np.zeros_like(theta)
    for step in range(1, steps + 1):
        gradient = finite_difference_gradient(objective, theta)
        first = beta1 * first + (1 - beta1) * gradient
        second = beta2 * second + (1 - beta2) * gradient ** 2
        first_hat = first / (1 - beta1 ** step)
        second_hat = second / (1 - beta2 ** step)
        theta = theta + lr * first_hat / (np.sqrt(second_hat) + eps)
        theta[-1] = max(theta[-1], log_floor)

        value = objective(theta)
        if np.isfinite(value) and value > best_value:
            best_value, best_theta = value, theta.copy()
        if history is not None:
            history.append(best_value)
        if step % 25 == 0 or step == steps:
            logger.debug(f"ADAM step {step}/{steps}: objective {value:.4f}, best {best_value:.4f}")

    logger.info(f"Hyperparameter fit finished: log marginal likelihood {best_value:.4f}")
    return kernel_init.from_vector(best_theta[:-1]), float(np.exp(best_theta[-1]))

