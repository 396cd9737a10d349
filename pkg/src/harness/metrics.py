"""
Accuracy metrics reported by the benchmarks
"""

import numpy as np

from ..utils.exceptions import DataError, DimensionMismatchError


def smae(pred, ref, y) -> float:
    """Scaled mean absolute error: ``mean(|pred - ref|) / var(y)``"""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    ref = np.asarray(ref, dtype=np.float64).ravel()
    if pred.shape != ref.shape:
        raise DimensionMismatchError(f"prediction has {pred.size} entries, reference {ref.size}")
    variance = float(np.var(np.asarray(y, dtype=np.float64)))
    if not variance > 0:
        raise DataError("SMAE is undefined for targets with zero variance")
    return float(np.mean(np.abs(pred - ref)) / variance)


def elementwise_mae(A, B) -> float:
    """Mean absolute difference over all entries of two equal-shape arrays"""
    A, B = np.asarray(A, dtype=np.float64), np.asarray(B, dtype=np.float64)
    if A.shape != B.shape:
        raise DimensionMismatchError(f"shapes differ: {A.shape} and {B.shape}")
    return float(np.mean(np.abs(A - B)))


def max_relative_error(pred, ref, floor: float = 1e-12) -> float:
    """``max |pred - ref| / max(|ref|, floor)``"""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    ref = np.asarray(ref, dtype=np.float64).ravel()
    if pred.shape != ref.shape:
        raise DimensionMismatchError(f"prediction has {pred.size} entries, reference {ref.size}")
    if pred.size == 0:
        return 0.0
    return float(np.max(np.abs(pred - ref) / np.maximum(np.abs(ref), floor)))


def sample_covariance(samples: np.ndarray) -> np.ndarray:
    """Covariance across columns of a (t, s) sample matrix; needs s >= 2"""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[1] < 2:
        raise DataError(f"need at least 2 samples for a covariance, got shape {samples.shape}")
    return np.atleast_2d(np.cov(samples))
