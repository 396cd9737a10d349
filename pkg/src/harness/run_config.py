"""
Run configuration for the benchmark harness
A JSON (or YAML) document, optionally a named preset, with command-line overrides
"""

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Union

import yaml

from config import config
from ..utils.exceptions import ConfigError

PRESET_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))),
                          'config', 'presets')

BUILTIN_DATASETS = ('synthetic', 'styblinski_tang', 'airline')


@dataclass
class RunConfig:
    """One harness run: data, model, LOVE settings and outputs"""

    name: str = "run"

    # Data
    dataset: str = "synthetic"
    target: Optional[str] = None
    features: Optional[List[str]] = None
    split: float = 0.8
    seed: int = 0
    chronological: bool = False
    n: int = 1000
    dims: int = 1
    data_noise: float = 0.04

    # Model
    kernel: Union[Dict[str, Any], List[Dict[str, Any]]] = field(
        default_factory=lambda: {'type': 'rbf', 'outputscale': 1.0, 'lengthscale': 0.1}
    )
    grid_sizes: List[int] = field(default_factory=lambda: [config.love.grid_size])
    noise: float = 0.04
    fit_steps: int = 0
    lr: float = 0.1
    hyperparameters_path: Optional[str] = None

    # LOVE
    k: int = field(default_factory=lambda: config.love.k)
    sample_k: int = field(default_factory=lambda: config.love.sample_k)

    # Benchmarks
    num_samples: int = 1000
    num_test: Optional[int] = None
    k_values: List[int] = field(default_factory=lambda: [5, 10, 20, 50, 100])
    scaling_sizes: List[int] = field(default_factory=lambda: [4096, 32768])
    oracles: bool = True
    dense_limit: int = field(default_factory=lambda: config.oracle.dense_limit)
    timing_repeats: int = field(default_factory=lambda: config.harness.timing_repeats)

    # Outputs
    output_dir: str = field(default_factory=lambda: config.harness.output_dir)
    cache_path: Optional[str] = None
    query_path: Optional[str] = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        """Raise ``ConfigError`` on any out-of-range field"""
        if not 0.0 < self.split < 1.0:
            raise ConfigError(f"split must lie in (0, 1), got {self.split}")
        if self.k < 1 or self.sample_k < 1:
            raise ConfigError(f"k and sample_k must be >= 1, got {self.k} and {self.sample_k}")
        if not self.noise > 0:
            raise ConfigError(f"noise must be positive, got {self.noise}")
        if self.n < 2 or self.dims < 1:
            raise ConfigError(f"need n >= 2 and dims >= 1, got {self.n} and {self.dims}")
        if not self.grid_sizes or any(int(m) < 4 for m in self.grid_sizes):
            raise ConfigError(f"every grid needs at least 4 points, got {self.grid_sizes}")
        if self.num_samples < 1:
            raise ConfigError(f"num_samples must be >= 1, got {self.num_samples}")
        if self.num_test is not None and self.num_test < 1:
            raise ConfigError(f"num_test must be >= 1 when given, got {self.num_test}")
        if any(int(k) < 1 for k in self.k_values):
            raise ConfigError(f"k_values must be >= 1, got {self.k_values}")
        if self.fit_steps < 0 or not self.lr > 0:
            raise ConfigError(f"need fit_steps >= 0 and lr > 0, got {self.fit_steps} and {self.lr}")
        if self.timing_repeats < 1:
            raise ConfigError(f"timing_repeats must be >= 1, got {self.timing_repeats}")
        if self.dataset not in BUILTIN_DATASETS and not os.path.exists(self.dataset):
            raise ConfigError(f"dataset {self.dataset!r} is neither built in nor an existing file")

    def kernel_specs(self, num_components: int) -> List[Dict[str, Any]]:
        """Kernel specification per additive component"""
        if isinstance(self.kernel, dict):
            return [dict(self.kernel) for _ in range(num_components)]
        if len(self.kernel) != num_components:
            raise ConfigError(f"{len(self.kernel)} kernel specs for {num_components} components")
        return [dict(spec) for spec in self.kernel]

    def grid_sizes_for(self, num_components: int) -> List[int]:
        if len(self.grid_sizes) == 1:
            return [int(self.grid_sizes[0])] * num_components
        if len(self.grid_sizes) != num_components:
            raise ConfigError(f"{len(self.grid_sizes)} grid sizes for {num_components} components")
        return [int(m) for m in self.grid_sizes]

    def output_path(self, suffix: str) -> str:
        return os.path.join(self.output_dir, f"{self.name}_{suffix}")

    def with_overrides(self, overrides: Dict[str, Any]) -> "RunConfig":
        """Copy with every non-None override applied"""
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"unknown run configuration field(s): {sorted(unknown)}")
        return replace(self, **{key: value for key, value in overrides.items() if value is not None})

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "RunConfig":
        if not isinstance(payload, dict):
            raise ConfigError(f"run configuration must be a mapping, got {type(payload).__name__}")
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown run configuration field(s): {sorted(unknown)}")
        try:
            return cls(**payload)
        except TypeError as e:
            raise ConfigError(f"invalid run configuration: {e}") from e

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        """Load from JSON, or YAML for ``.yaml``/``.yml`` files"""
        if not os.path.exists(path):
            raise ConfigError(f"configuration file not found: {path}")
        try:
            with open(path, 'r', encoding='utf-8') as f:
                if path.endswith(('.yaml', '.yml')):
                    payload = yaml.safe_load(f)
                else:
                    payload = json.load(f)
        except (json.JSONDecodeError, yaml.YAMLError) as e:
            raise ConfigError(f"cannot parse configuration {path}: {e}") from e
        return cls.from_dict(payload or {})

    @classmethod
    def from_preset(cls, name: str) -> "RunConfig":
        path = os.path.join(PRESET_DIR, f"{name}.json")
        if not os.path.exists(path):
            available = sorted(p[:-5] for p in os.listdir(PRESET_DIR) if p.endswith('.json'))
            raise ConfigError(f"unknown preset {name!r}; available: {available}")
        return cls.from_file(path)


def load_run_config(path: Optional[str] = None, preset: Optional[str] = None,
                    overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Resolve a run configuration

    Args:
        path: JSON/YAML configuration file
        preset: Name of a file under ``config/presets`` (ignored when ``path`` is given)
        overrides: Field values taking precedence over the file

    Returns:
        Validated RunConfig
    """
    if path:
        cfg = RunConfig.from_file(path)
    elif preset:
        cfg = RunConfig.from_preset(preset)
    else:
        cfg = RunConfig()
    return cfg.with_overrides(overrides or {})
