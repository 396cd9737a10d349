"""
Dataset ingestion for the benchmark harness
CSV loading with row rejection, seeded splits, training-set standardization
and the built-in synthetic and airline problems
"""

import os
from dataclasses import dataclass
from typing import Any, Dict, Iterator, List, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd

from .run_config import RunConfig
from ..utils.exceptions import ConfigError, DataError
from ..utils.logger import get_logger

logger = get_logger(__name__)

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))), 'data')
AIRLINE_PATH = os.path.join(DATA_DIR, 'airline.csv')
AIRLINE_TRAIN_MONTHS = 96


class DataSplit(NamedTuple):
    X: np.ndarray
    y: np.ndarray

    @property
    def n(self) -> int:
        return self.y.size


@dataclass(frozen=True, eq=False)
class Standardization:
    """Training-set feature and target statistics"""

    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float

    @classmethod
    def fit(cls, X: np.ndarray, y: np.ndarray) -> "Standardization":
        x_std = X.std(axis=0)
        x_std[x_std == 0] = 1.0
        return cls(X.mean(axis=0), x_std, float(y.mean()), float(y.std()) or 1.0)

    def transform_X(self, X: np.ndarray) -> np.ndarray:
        return (X - self.x_mean) / self.x_std

    def transform_y(self, y: np.ndarray) -> np.ndarray:
        return (y - self.y_mean) / self.y_std

    def inverse_mean(self, mean: np.ndarray) -> np.ndarray:
        return self.y_mean + self.y_std * np.asarray(mean)

    def inverse_variance(self, variance: np.ndarray) -> np.ndarray:
        return self.y_std ** 2 * np.asarray(variance)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'x_mean': self.x_mean.tolist(),
            'x_std': self.x_std.tolist(),
            'y_mean': self.y_mean,
            'y_std': self.y_std,
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "Standardization":
        return cls(np.asarray(payload['x_mean'], dtype=np.float64), np.asarray(payload['x_std'], dtype=np.float64),
                   float(payload['y_mean']), float(payload['y_std']))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Standardized train/test split; unpacks as ``train, test = dataset``"""

    name: str
    train: DataSplit
    test: DataSplit
    scaling: Standardization
    feature_names: Tuple[str, ...]
    rejected_rows: int = 0

    def __iter__(self) -> Iterator[DataSplit]:
        return iter((self.train, self.test))

    @property
    def all_X(self) -> np.ndarray:
        return np.vstack([self.train.X, self.test.X])

    def summary(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'n_train': self.train.n,
            'n_test': self.test.n,
            'num_features': len(self.feature_names),
            'rejected_rows': self.rejected_rows,
        }


def split_and_standardize(name: str, X: np.ndarray, y: np.ndarray, split: float, seed: int,
                          feature_names: Optional[List[str]] = None, chronological: bool = False,
                          rejected_rows: int = 0, n_train: Optional[int] = None) -> Dataset:
    """
    Split rows into train and test, then standardize both with training statistics

    Args:
        split: Training fraction
        seed: Shuffle seed (ignored for chronological splits)
        chronological: Keep the file order, first rows train
        n_train: Exact training size, overriding ``split``
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = np.asarray(y, dtype=np.float64).ravel()
    n = y.size
    if n == 0:
        raise DataError(f"dataset {name!r} has no usable rows")
    if n_train is None:
        n_train = int(round(split * n))
    n_train = min(max(n_train, 1), n - 1) if n > 1 else n

    order = np.arange(n) if chronological else np.random.default_rng(seed).permutation(n)
    train_idx, test_idx = order[:n_train], order[n_train:]
    scaling = Standardization.fit(X[train_idx], y[train_idx])
    names = tuple(feature_names or [f"x{i}" for i in range(X.shape[1])])
    logger.info(f"Dataset {name}: {n_train} train / {n - n_train} test rows, {X.shape[1]} feature(s)")
    return Dataset(
        name=name,
        train=DataSplit(scaling.transform_X(X[train_idx]), scaling.transform_y(y[train_idx])),
        test=DataSplit(scaling.transform_X(X[test_idx]), scaling.transform_y(y[test_idx])),
        scaling=scaling,
        feature_names=names,
        rejected_rows=rejected_rows,
    )


def read_numeric_csv(path: str, columns: Optional[List[str]] = None) -> Tuple[pd.DataFrame, int]:
    """
    Read a CSV with a header row keeping only fully numeric rows

    Returns:
        (frame, number of rejected rows)
    """
    if not os.path.exists(path):
        raise DataError(f"data file not found: {path}")
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"cannot parse {path}: {e}") from e

    if columns is not None:
        missing = [c for c in columns if c not in frame.columns]
        if missing:
            raise ConfigError(f"column(s) {missing} not found in {path}; available: {list(frame.columns)}")
        frame = frame[columns]

    numeric = frame.apply(pd.to_numeric, errors='coerce')
    usable = numeric.notna().all(axis=1) & np.isfinite(numeric.to_numpy(dtype=np.float64, na_value=np.nan)).all(axis=1)
    rejected = int((~usable).sum())
    if rejected:
        logger.warning(f"Rejected {rejected} row(s) of {path} with missing or non-numeric cells")
    numeric = numeric[usable].reset_index(drop=True)
    if numeric.empty:
        raise DataError(f"no usable rows in {path}")
    return numeric, rejected


def load_dataset(path: str, target: Optional[str] = None, split: float = 0.8, seed: int = 0,
                 features: Optional[List[str]] = None, chronological: bool = False) -> Dataset:
    """
    Load a numeric CSV and split it

    Args:
        path: CSV with a header row
        target: Target column (defaults to the last column)
        split: Training fraction
        seed: Shuffle seed
        features: Feature columns (defaults to every other column)
        chronological: Keep file order instead of shuffling

    Returns:
        Dataset, standardized with training statistics
    """
    if not os.path.exists(path):
        raise DataError(f"data file not found: {path}")
    try:
        header = pd.read_csv(path, nrows=0).columns.tolist()
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"cannot parse {path}: {e}") from e
    target = target or header[-1]
    if target not in header:
        raise ConfigError(f"target column {target!r} not found in {path}; available: {header}")
    features = list(features) if features else [c for c in header if c != target]
    if not features:
        raise ConfigError(f"{path} has no feature columns besides the target")

    frame, rejected = read_numeric_csv(path, features + [target])
    return split_and_standardize(
        os.path.splitext(os.path.basename(path))[0],
        frame[features].to_numpy(dtype=np.float64),
        frame[target].to_numpy(dtype=np.float64),
        split, seed, feature_names=features, chronological=chronological, rejected_rows=rejected,
    )


def make_synthetic_1d(n: int, seed: int = 0, noise: float = 0.04) -> Tuple[np.ndarray, np.ndarray]:
    """Smooth 1-D regression problem on [0, 1] with Gaussian noise of variance ``noise``"""
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, size=n)
    f = np.sin(4.0 * np.pi * x) + 0.5 * np.cos(9.0 * x) + x
    return x.reshape(-1, 1), f + np.sqrt(noise) * rng.standard_normal(n)


def styblinski_tang(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return 0.5 * np.sum(X ** 4 - 16.0 * X ** 2 + 5.0 * X, axis=1)


def make_styblinski_tang(n: int, d: int, seed: int = 0, noise: float = 0.04) -> Tuple[np.ndarray, np.ndarray]:
    """Additive Styblinski-Tang benchmark on [-5, 5]^d with relative noise"""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-5.0, 5.0, size=(n, d))
    f = styblinski_tang(X)
    return X, f + np.sqrt(noise) * f.std() * rng.standard_normal(n)


def load_airline(path: str = AIRLINE_PATH) -> Dataset:
    """
    Monthly airline passenger counts, first 96 months train, last 48 test

    The input is time in years; the split is chronological.
    """
    frame, rejected = read_numeric_csv(path, ['year', 'month', 'passengers'])
    time = frame['year'].to_numpy(dtype=np.float64) + (frame['month'].to_numpy(dtype=np.float64) - 1.0) / 12.0
    if frame.shape[0] <= AIRLINE_TRAIN_MONTHS:
        raise DataError(f"airline series needs more than {AIRLINE_TRAIN_MONTHS} rows, got {frame.shape[0]}")
    return split_and_standardize(
        'airline', time, frame['passengers'].to_numpy(dtype=np.float64), split=0.5, seed=0,
        feature_names=['time'], chronological=True, rejected_rows=rejected, n_train=AIRLINE_TRAIN_MONTHS,
    )


def build_dataset(cfg: RunConfig, n: Optional[int] = None) -> Dataset:
    """Dataset named by a run configuration; ``n`` overrides the synthetic size"""
    n = cfg.n if n is None else n
    if cfg.dataset == 'airline':
        return load_airline()
    if cfg.dataset == 'synthetic':
        X, y = make_synthetic_1d(n, cfg.seed, cfg.data_noise)
        return split_and_standardize('synthetic', X, y, cfg.split, cfg.seed)
    if cfg.dataset == 'styblinski_tang':
        X, y = make_styblinski_tang(n, cfg.dims, cfg.seed, cfg.data_noise)
        return split_and_standardize('styblinski_tang', X, y, cfg.split, cfg.seed)
    return load_dataset(cfg.dataset, cfg.target, cfg.split, cfg.seed, cfg.features, cfg.chronological)


def read_query_points(path: str, feature_names: Tuple[str, ...]) -> np.ndarray:
    """Raw query inputs from a CSV holding the model's feature columns"""
    frame, rejected = read_numeric_csv(path, list(feature_names))
    if rejected:
        logger.warning(f"{rejected} query row(s) skipped")
    return frame.to_numpy(dtype=np.float64)
