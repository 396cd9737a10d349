#!/usr/bin/env python3
"""
Kernels Module
Stationary covariance functions, inducing grids and additive composition
descriptors
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .linalg import ToeplitzColumn
from ..utils.exceptions import ConfigError, DataError, DimensionMismatchError
from ..utils.logger import get_logger

logger = get_logger(__name__)


class KernelVariant(Enum):
    RBF = "rbf"
    SPECTRAL_MIXTURE = "spectral_mixture"


@dataclass(frozen=True, eq=False)
class KernelParams:
    """
    Hyperparameters of a stationary 1-D kernel

    Scale parameters are held in log-space so any unconstrained vector maps
    to a valid kernel. Spectral-mixture means are held raw and used through
    their absolute value.
    """

    variant: KernelVariant
    log_outputscale: float = 0.0
    log_lengthscale: float = 0.0
    log_weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    means: np.ndarray = field(default_factory=lambda: np.zeros(0))
    log_variances: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        object.__setattr__(self, 'variant', KernelVariant(self.variant))
        for name in ('log_weights', 'means', 'log_variances'):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64)))
        if self.variant is KernelVariant.SPECTRAL_MIXTURE:
            q = self.log_weights.size
            if q < 1 or self.means.size != q or self.log_variances.size != q:
                raise ConfigError(
                    f"spectral mixture needs Q >= 1 equal-length weights/means/variances, "
                    f"got {self.log_weights.size}/{self.means.size}/{self.log_variances.size}"
                )

    @classmethod
    def rbf(cls, outputscale: float = 1.0, lengthscale: float = 1.0) -> "KernelParams":
        if not (outputscale > 0 and lengthscale > 0):
            raise ConfigError(f"RBF outputscale and lengthscale must be positive, got {outputscale}, {lengthscale}")
        return cls(KernelVariant.RBF, log_outputscale=np.log(outputscale), log_lengthscale=np.log(lengthscale))

    @classmethod
    def spectral_mixture(cls, weights: Sequence[float], means: Sequence[float],
                         variances: Sequence[float]) -> "KernelParams":
        weights = np.asarray(weights, dtype=np.float64)
        variances = np.asarray(variances, dtype=np.float64)
        if np.any(weights <= 0) or np.any(variances <= 0):
            raise ConfigError("spectral mixture weights and variances must be positive")
        return cls(
            KernelVariant.SPECTRAL_MIXTURE,
            log_weights=np.log(weights),
            means=np.abs(np.asarray(means, dtype=np.float64)),
            log_variances=np.log(variances),
        )

    @classmethod
    def spectral_mixture_from_data(cls, x: np.ndarray, y: np.ndarray, num_mixtures: int,
                                   seed: int = 0) -> "KernelParams":
        """
        Data-driven spectral mixture initialization

        Weights split the target variance evenly, means are drawn uniformly
        below half the Nyquist frequency of the input spacing, and inverse
        lengthscales are half-normal scaled by the input range.
        """
        x = np.sort(np.asarray(x, dtype=np.float64).ravel())
        rng = np.random.default_rng(seed)
        spacing = np.diff(x)
        spacing = spacing[spacing > 0]
        min_spacing = spacing.min() if spacing.size else 1.0
        input_range = max(x[-1] - x[0], min_spacing)
        nyquist = 0.5 / min_spacing

        weights = np.full(num_mixtures, max(np.var(y), 1e-6) / num_mixtures)
        means = rng.uniform(0.0, 0.5 * nyquist, size=num_mixtures)
        inv_lengthscales = np.abs(rng.normal(size=num_mixtures)) / input_range + 1e-3 / input_range
        return cls.spectral_mixture(weights, means, inv_lengthscales ** 2)

    @property
    def num_mixtures(self) -> int:
        return self.log_weights.size

    @property
    def outputscale(self) -> float:
        return float(np.exp(self.log_outputscale))

    @property
    def lengthscale(self) -> float:
        return float(np.exp(self.log_lengthscale))

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def variances(self) -> np.ndarray:
        return np.exp(self.log_variances)

    def to_vector(self) -> np.ndarray:
        """Unconstrained optimization vector"""
        if self.variant is KernelVariant.RBF:
            return np.array([self.log_outputscale, self.log_lengthscale], dtype=np.float64)
        return np.concatenate([self.log_weights, self.means, self.log_variances])

    def from_vector(self, vector: np.ndarray) -> "KernelParams":
        """Kernel of the same variant and size built from ``to_vector`` layout"""
        vector = np.asarray(vector, dtype=np.float64)
        if vector.size != self.num_parameters:
            raise DimensionMismatchError(f"expected {self.num_parameters} parameters, got {vector.size}")
        if self.variant is KernelVariant.RBF:
            return replace(self, log_outputscale=float(vector[0]), log_lengthscale=float(vector[1]))
        q = self.num_mixtures
        return replace(self, log_weights=vector[:q], means=vector[q:2 * q], log_variances=vector[2 * q:])

    @property
    def num_parameters(self) -> int:
        return 2 if self.variant is KernelVariant.RBF else 3 * self.num_mixtures

    def to_dict(self) -> Dict[str, Any]:
        if self.variant is KernelVariant.RBF:
            return {'type': self.variant.value, 'outputscale': self.outputscale, 'lengthscale': self.lengthscale}
        return {
            'type': self.variant.value,
            'weights': self.weights.tolist(),
            'means': np.abs(self.means).tolist(),
            'variances': self.variances.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "KernelParams":
        try:
            variant = KernelVariant(payload.get('type', 'rbf'))
            if variant is KernelVariant.RBF:
                return cls.rbf(float(payload.get('outputscale', 1.0)), float(payload.get('lengthscale', 1.0)))
            return cls.spectral_mixture(payload['weights'], payload['means'], payload['variances'])
        except (KeyError, ValueError, TypeError) as e:
            raise ConfigError(f"invalid kernel specification {payload!r}: {e}") from e


def kernel_eval(p: KernelParams, r) -> np.ndarray:
    """
    Evaluate a stationary kernel at distance(s) ``r``

    RBF: ``s2 * exp(-r^2 / (2 l^2))``.
    Spectral mixture: ``sum_q w_q exp(-2 pi^2 r^2 v_q) cos(2 pi r |mu_q|)``.

    Args:
        p: Kernel hyperparameters
        r: Scalar or array of distances

    Returns:
        Kernel values with the shape of ``r`` (a float for scalar input)
    """
    vector = p.to_vector()
    if not np.all(np.isfinite(vector)):
        raise ConfigError(f"kernel has non-finite parameters: {vector}")
    r_arr = np.asarray(r, dtype=np.float64)
    if not np.all(np.isfinite(r_arr)):
        raise DataError("kernel distances must be finite")

    if p.variant is KernelVariant.RBF:
        values = p.outputscale * np.exp(-0.5 * (r_arr / p.lengthscale) ** 2)
    else:
        tau = r_arr[..., None]
        values = np.sum(
            p.weights * np.exp(-2.0 * np.pi ** 2 * tau ** 2 * p.variances) * np.cos(2.0 * np.pi * tau * np.abs(p.means)),
            axis=-1,
        )

    if np.ndim(r) == 0:
        return float(values)
    return values


@dataclass(frozen=True)
class Grid1D:
    """Regular inducing grid ``u_i = start + i * spacing``, i = 0..count-1"""

    start: float
    spacing: float
    count: int

    def __post_init__(self):
        if not (np.isfinite(self.start) and np.isfinite(self.spacing) and self.spacing > 0):
            raise ConfigError(f"grid needs finite start and positive spacing, got {self.start}, {self.spacing}")
        if int(self.count) < 4:
            raise ConfigError(f"cubic interpolation needs at least 4 grid points, got {self.count}")
        object.__setattr__(self, 'count', int(self.count))

    @property
    def points(self) -> np.ndarray:
        return self.start + self.spacing * np.arange(self.count)

    @property
    def interpolable_range(self) -> Tuple[float, float]:
        """Inputs in this closed interval have 4 in-range neighbors"""
        return (self.start + self.spacing, self.start + (self.count - 2) * self.spacing)

    def to_dict(self) -> Dict[str, Any]:
        return {'start': float(self.start), 'spacing': float(self.spacing), 'count': self.count}

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "Grid1D":
        try:
            return cls(float(payload['start']), float(payload['spacing']), int(payload['count']))
        except (KeyError, ValueError, TypeError) as e:
            raise ConfigError(f"invalid grid specification {payload!r}: {e}") from e


def kuu_first_column(p: KernelParams, g: Grid1D) -> ToeplitzColumn:
    """First column of K_UU on a regular grid: ``col[i] = k(i * h)``"""
    return ToeplitzColumn(kernel_eval(p, np.arange(g.count) * g.spacing))


def build_grid(data_min: float, data_max: float, m: int) -> Grid1D:
    """
    Regular grid of ``m`` points covering ``[data_min, data_max]`` with margin

    With m >= 6 the data range is padded by two cells on each side, so
    ``h = (max - min) / (m - 5)``. Grids of 4 or 5 points only have room for
    one margin cell per side, ``h = (max - min) / (m - 3)``. A degenerate
    range is widened to unit width around its value.
    """
    if m < 4:
        raise ConfigError(f"cubic interpolation needs at least 4 grid points, got {m}")
    data_min, data_max = float(data_min), float(data_max)
    if not (np.isfinite(data_min) and np.isfinite(data_max)) or data_max < data_min:
        raise ConfigError(f"invalid data range [{data_min}, {data_max}]")
    if data_max == data_min:
        data_min, data_max = data_min - 0.5, data_max + 0.5

    margin = 2 if m >= 6 else 1
    spacing = (data_max - data_min) / (m - 1 - 2 * margin)
    return Grid1D(start=data_min - margin * spacing, spacing=spacing, count=m)


@dataclass(frozen=True, eq=False)
class KernelComponent:
    """One additive term: a 1-D kernel on one input dimension with its grid"""

    dim: int
    kernel: KernelParams
    grid: Grid1D


@dataclass(frozen=True, eq=False)
class AdditiveStructure:
    """
    Sum of 1-D kernels, each on its own input dimension and grid

    The stacked inducing vector has ``m_total = sum(m_i)`` entries; component
    ``c`` occupies columns ``offsets[c]:offsets[c + 1]``.
    """

    components: Tuple[KernelComponent, ...]

    def __post_init__(self):
        components = tuple(self.components)
        if not components:
            raise ConfigError("an additive structure needs at least one component")
        for component in components:
            if component.dim < 0:
                raise ConfigError(f"invalid input dimension {component.dim}")
        object.__setattr__(self, 'components', components)

    @classmethod
    def single(cls, kernel: KernelParams, grid: Grid1D, dim: int = 0) -> "AdditiveStructure":
        return cls((KernelComponent(dim, kernel, grid),))

    @property
    def num_components(self) -> int:
        return len(self.components)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([c.grid.count for c in self.components])]).astype(np.int64)

    @property
    def m_total(self) -> int:
        return int(sum(c.grid.count for c in self.components))

    @property
    def max_dim(self) -> int:
        return max(c.dim for c in self.components)

    def check_dims(self, num_features: int):
        if self.max_dim >= num_features:
            raise ConfigError(f"component references input dimension {self.max_dim}, data has {num_features}")

    def kuu_columns(self) -> List[ToeplitzColumn]:
        return [kuu_first_column(c.kernel, c.grid) for c in self.components]

    def prior_variance(self) -> float:
        """``k(x, x)`` of the summed kernel"""
        return float(sum(kernel_eval(c.kernel, 0.0) for c in self.components))

    def with_kernels(self, kernels: Sequence[KernelParams]) -> "AdditiveStructure":
        return AdditiveStructure(tuple(
            KernelComponent(c.dim, k, c.grid) for c, k in zip(self.components, kernels)
        ))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([c.kernel.to_vector() for c in self.components])

    def from_vector(self, vector: np.ndarray) -> "AdditiveStructure":
        kernels, start = [], 0
        for c in self.components:
            size = c.kernel.num_parameters
            kernels.append(c.kernel.from_vector(vector[start:start + size]))
            start += size
        if start != np.asarray(vector).size:
            raise DimensionMismatchError(f"expected {start} kernel parameters, got {np.asarray(vector).size}")
        return self.with_kernels(kernels)

    def to_dict(self) -> Dict[str, Any]:
        return {'components': [
            {'dim': c.dim, 'kernel': c.kernel.to_dict(), 'grid': c.grid.to_dict()} for c in self.components
        ]}

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "AdditiveStructure":
        try:
            return cls(tuple(
                KernelComponent(int(c['dim']), KernelParams.from_dict(c['kernel']), Grid1D.from_dict(c['grid']))
                for c in payload['components']
            ))
        except (KeyError, TypeError) as e:
            raise ConfigError(f"invalid additive structure {payload!r}: {e}") from e


def as_inputs(X) -> np.ndarray:
    """Inputs as an (n, D) float array; a 1-D array is one feature"""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        return X.reshape(-1, 1)
    if X.ndim != 2:
        raise DimensionMismatchError(f"inputs must be 1-D or 2-D, got shape {X.shape}")
    return X


def build_structure(X: np.ndarray, kernels: Sequence[KernelParams], grid_sizes: Sequence[int],
                    dims: Optional[Sequence[int]] = None) -> AdditiveStructure:
    """
    One component per kernel with grids fitted to the columns of ``X``

    Args:
        X: All inputs the model will see (training and test), shape (n, D)
        kernels: Kernel per component
        grid_sizes: Grid size per component
        dims: Input dimension per component (defaults to 0..d-1)
    """
    X = as_inputs(X)
    dims = list(range(len(kernels))) if dims is None else list(dims)
    if not (len(kernels) == len(grid_sizes) == len(dims)):
        raise ConfigError("kernels, grid sizes and dims must have equal lengths")
    components = []
    for dim, kernel, m in zip(dims, kernels, grid_sizes):
        if dim >= X.shape[1]:
            raise ConfigError(f"component references input dimension {dim}, data has {X.shape[1]}")
        column = X[:, dim]
        components.append(KernelComponent(dim, kernel, build_grid(column.min(), column.max(), int(m))))
    return AdditiveStructure(tuple(components))


def additive_covariance(structure: AdditiveStructure, X1: np.ndarray, X2: np.ndarray) -> np.ndarray:
    """Exact kernel matrix ``sum_c k_c(X1[:, d_c], X2[:, d_c])``"""
    X1, X2 = as_inputs(X1), as_inputs(X2)
    K = np.zeros((X1.shape[0], X2.shape[0]))
    for c in structure.components:
        K += kernel_eval(c.kernel, np.abs(X1[:, c.dim][:, None] - X2[:, c.dim][None, :]))
    return K
