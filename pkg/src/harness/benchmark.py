#!/usr/bin/env python3
"""
Benchmark Harness Module
Fit, precompute, query and sampling workflows plus the variance, sampling,
k-sweep and scaling benchmarks. Every workflow returns a BenchmarkReport and
writes it as JSON, with CSV plot data where a sweep is involved.
"""

import json
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from .datasets import Dataset, Standardization, build_dataset, read_query_points
from .metrics import elementwise_mae, max_relative_error, sample_covariance, smae
from .run_config import RunConfig
from ..core.exact import exact_posterior, exact_sample, fit_hyperparameters, log_marginal_likelihood, \
    predictive_log_likelihood
from ..core.kernels import AdditiveStructure, KernelParams, KernelVariant, build_structure
from ..core.love import (
    LoveCache,
    LovePredictor,
    load_cache,
    love_precompute,
    negative_variance_clamps,
    predict_covar,
    predict_variances,
    sample_covariance as root_covariance,
    save_cache,
)
from ..core.ski import SkiModel, build_W, dense_ski_covariance, make_ski_model, predict_mean, predict_means, \
    predict_var_from_scratch
from ..utils.exceptions import ConfigError, DataError, LoveError
from ..utils.helpers import environment_metadata, median_wall_time, write_json
from ..utils.logger import get_logger

logger = get_logger(__name__)

MIN_TIMING_REPEATS = 20


@dataclass
class BenchmarkReport:
    """Timings, accuracy metrics, environment and the configuration that produced them"""

    kind: str
    config: Dict[str, Any]
    dataset: Dict[str, Any] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    metrics: Dict[str, Any] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    environment: Dict[str, str] = field(default_factory=environment_metadata)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': self.kind,
            'config': self.config,
            'dataset': self.dataset,
            'timings': self.timings,
            'metrics': self.metrics,
            'outputs': self.outputs,
            'environment': self.environment,
        }

    def record_timing_repeats(self, repeats: int):
        """Note how many repetitions each per-query median used"""
        self.metrics['timing_repeats'] = int(repeats)
        self.metrics['timing_below_minimum'] = repeats < MIN_TIMING_REPEATS
        if repeats < MIN_TIMING_REPEATS:
            logger.warning(f"Per-query medians use {repeats} repetitions, fewer than {MIN_TIMING_REPEATS}")

    def save(self, path: str) -> str:
        self.outputs['report'] = path
        return write_json(path, self.to_dict())


class PhaseTimer:
    """Wall time per named phase; errors are re-raised with the phase as context"""

    def __init__(self, timings: Dict[str, float]):
        self.timings = timings

    @contextmanager
    def phase(self, name: str):
        logger.info(f"▶ {name}")
        start = time.perf_counter()
        try:
            yield
        except LoveError as e:
            raise e.with_context(name) from e
        finally:
            self.timings[f"{name}_s"] = time.perf_counter() - start


@dataclass(frozen=True, eq=False)
class Problem:
    cfg: RunConfig
    dataset: Dataset
    structure: AdditiveStructure
    noise: float
    model: SkiModel


def initial_kernels(cfg: RunConfig, dataset: Dataset) -> List[KernelParams]:
    """Kernels from the run configuration; spectral mixtures without weights are initialized from data"""
    train = dataset.train
    kernels = []
    for dim, spec in enumerate(cfg.kernel_specs(train.X.shape[1])):
        if spec.get('type') == KernelVariant.SPECTRAL_MIXTURE.value and 'weights' not in spec:
            kernels.append(KernelParams.spectral_mixture_from_data(
                train.X[:, dim], train.y, int(spec.get('num_mixtures', 10)), seed=cfg.seed + dim
            ))
        else:
            kernels.append(KernelParams.from_dict(spec))
    return kernels


def read_hyperparameters(path: str) -> Tuple[List[KernelParams], float]:
    if not os.path.exists(path):
        raise ConfigError(f"hyperparameter file not found: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"cannot parse hyperparameters {path}: {e}") from e
    try:
        return [KernelParams.from_dict(k) for k in payload['kernels']], float(payload['noise'])
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid hyperparameter file {path}: {e}") from e


def prepare_problem(cfg: RunConfig, dataset: Optional[Dataset] = None) -> Problem:
    """
    Data, kernels, grids and the SKI model for a run

    Grids cover training and test inputs. Kernels come from the
    hyperparameter file when one is configured, otherwise from the run
    configuration, optionally refined by ``fit_steps`` ADAM steps on the exact
    marginal likelihood.
    """
    dataset = dataset or build_dataset(cfg)
    train = dataset.train
    num_components = train.X.shape[1]

    if cfg.hyperparameters_path:
        kernels, noise = read_hyperparameters(cfg.hyperparameters_path)
    else:
        kernels, noise = initial_kernels(cfg, dataset), cfg.noise
    structure = build_structure(dataset.all_X, kernels, cfg.grid_sizes_for(num_components))

    if cfg.fit_steps > 0:
        structure, noise = fit_hyperparameters(
            train.X, train.y, structure, noise, steps=cfg.fit_steps, lr=cfg.lr, dense_limit=cfg.dense_limit
        )

    model = make_ski_model(train.X, train.y, structure, noise, standardize=False)
    logger.info(f"Model ready: n={model.n}, m_total={model.m_total}, components={structure.num_components}, "
                f"noise={noise:.3e}")
    return Problem(cfg, dataset, structure, noise, model)


def _oracle_feasible(cfg: RunConfig, problem: Problem) -> bool:
    return cfg.oracles and problem.model.n <= cfg.dense_limit


def _test_points(cfg: RunConfig, dataset: Dataset) -> np.ndarray:
    X = dataset.test.X
    if X.shape[0] == 0:
        raise DataError("the test split is empty")
    return X if cfg.num_test is None else X[:cfg.num_test]


def run_fit(cfg: RunConfig) -> BenchmarkReport:
    """Fit hyperparameters on the training split and write them as JSON"""
    report = BenchmarkReport('fit', cfg.to_dict())
    timer = PhaseTimer(report.timings)
    with timer.phase('fit'):
        problem = prepare_problem(cfg)
    train = problem.dataset.train
    if train.n <= cfg.dense_limit:
        report.metrics['log_marginal_likelihood'] = log_marginal_likelihood(
            train.X, train.y, problem.structure, problem.noise, dense_limit=cfg.dense_limit
        )
    report.dataset = problem.dataset.summary()

    payload = {
        'kernels': [c.kernel.to_dict() for c in problem.structure.components],
        'noise': problem.noise,
        'log_marginal_likelihood': report.metrics.get('log_marginal_likelihood'),
        'fit_steps': cfg.fit_steps,
    }
    report.outputs['hyperparameters'] = write_json(cfg.output_path('hyperparameters.json'), payload)
    report.save(cfg.output_path('fit.json'))
    return report


def run_precompute(cfg: RunConfig) -> BenchmarkReport:
    """Build mean, variance and sampling caches and save them for later queries"""
    report = BenchmarkReport('precompute', cfg.to_dict())
    timer = PhaseTimer(report.timings)
    with timer.phase('data'):
        problem = prepare_problem(cfg)
    with timer.phase('precompute'):
        predictor = LovePredictor.from_model(problem.model, cfg.k, sample_k=cfg.sample_k)
    predictor.metadata = {
        'scaling': problem.dataset.scaling.to_dict(),
        'feature_names': list(problem.dataset.feature_names),
        'run_name': cfg.name,
    }
    report.timings.update(predictor.timings)
    report.dataset = problem.dataset.summary()
    report.metrics.update({'k_effective': predictor.cache.k_effective, 'sample_k': predictor.cache.sample_k})
    report.outputs['cache'] = save_cache(cfg.cache_path or cfg.output_path('cache.npz'), predictor)
    report.save(cfg.output_path('precompute.json'))
    return report


def _query_inputs(cfg: RunConfig, predictor: LovePredictor) -> Tuple[np.ndarray, np.ndarray, Standardization,
                                                                       List[str]]:
    """(standardized inputs, raw inputs, scaling, feature names) for a query run"""
    if 'scaling' not in predictor.metadata:
        raise DataError("the cache carries no feature scaling; rebuild it with the precompute command")
    scaling = Standardization.from_dict(predictor.metadata['scaling'])
    names = list(predictor.metadata.get('feature_names') or [])
    if cfg.query_path:
        raw = read_query_points(cfg.query_path, tuple(names))
        return scaling.transform_X(raw), raw, scaling, names
    X = _test_points(cfg, build_dataset(cfg))
    return X, X * scaling.x_std + scaling.x_mean, scaling, names


def _load_predictor(cfg: RunConfig) -> LovePredictor:
    return load_cache(cfg.cache_path or cfg.output_path('cache.npz'))


def run_predict(cfg: RunConfig) -> BenchmarkReport:
    """Predictive means and variances from a saved cache, written as CSV in target units"""
    report = BenchmarkReport('predict', cfg.to_dict())
    timer = PhaseTimer(report.timings)
    with timer.phase('load_cache'):
        predictor = _load_predictor(cfg)
    X, raw, scaling, names = _query_inputs(cfg, predictor)
    with timer.phase('predict'):
        mean = scaling.inverse_mean(predictor.mean(X))
        variance = scaling.inverse_variance(predictor.variance(X))

    frame = pd.DataFrame(raw, columns=names or [f"x{i}" for i in range(raw.shape[1])])
    frame['mean'] = mean
    frame['variance'] = variance
    path = cfg.output_path('predictions.csv')
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    frame.to_csv(path, index=False)
    report.outputs['predictions'] = path
    report.metrics['num_queries'] = int(X.shape[0])
    report.save(cfg.output_path('predict.json'))
    return report


def run_sample(cfg: RunConfig) -> BenchmarkReport:
    """Joint posterior samples from a saved cache, one row per query point"""
    report = BenchmarkReport('sample', cfg.to_dict())
    timer = PhaseTimer(report.timings)
    with timer.phase('load_cache'):
        predictor = _load_predictor(cfg)
    X, raw, scaling, names = _query_inputs(cfg, predictor)
    with timer.phase('sample'):
        samples = scaling.inverse_mean(predictor.sample(X, cfg.num_samples, seed=cfg.seed))

    frame = pd.DataFrame(raw, columns=names or [f"x{i}" for i in range(raw.shape[1])])
    samples_frame = pd.DataFrame(samples, columns=[f"sample_{j}" for j in range(samples.shape[1])])
    path = cfg.output_path('samples.csv')
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    pd.concat([frame, samples_frame], axis=1).to_csv(path, index=False)
    report.outputs['samples'] = path
    report.metrics.update({'num_queries': int(X.shape[0]), 'num_samples': cfg.num_samples})
    report.save(cfg.output_path('sample.json'))
    return report


def run_variance_benchmark(cfg: RunConfig) -> BenchmarkReport:
    """
    LOVE variances on the test split against the exact GP and dense KISS-GP

    Reports precompute time, per-query mean and variance times, the
    per-query time of the from-scratch CG path, SMAE against each oracle and
    the test log-likelihood of LOVE and exact predictions.
    """
    report = BenchmarkReport('variance', cfg.to_dict())
    report.record_timing_repeats(cfg.timing_repeats)
    timer = PhaseTimer(report.timings)
    with timer.phase('data'):
        problem = prepare_problem(cfg)
    model = problem.model
    train, test = problem.dataset
    report.dataset = problem.dataset.summary()

    with timer.phase('precompute'):
        predictor = LovePredictor.from_model(model, cfg.k)
    cache = predictor.cache
    report.timings.update(predictor.timings)

    X_star = _test_points(cfg, problem.dataset)
    y_star = test.y[:X_star.shape[0]]
    W_star = build_W(X_star, problem.structure)
    prior = problem.structure.prior_variance()
    clamps_before = negative_variance_clamps.count
    with timer.phase('variance_queries'):
        love_var = predict_variances(cache, W_star, prior)
    love_mean = predict_means(cache, W_star)

    row = W_star.row(0)
    report.timings['variance_query_s'] = median_wall_time(lambda: predict_covar(cache, row, row, prior),
                                                          cfg.timing_repeats)
    report.timings['mean_query_s'] = median_wall_time(lambda: predict_mean(cache, row), cfg.timing_repeats)
    report.timings['variance_from_scratch_s'] = median_wall_time(
        lambda: predict_var_from_scratch(model, row, prior), cfg.timing_repeats
    )

    report.metrics.update({
        'k_effective': cache.k_effective,
        'negative_variance_clamps': negative_variance_clamps.count - clamps_before,
        'log_likelihood_love': predictive_log_likelihood(love_mean, love_var, y_star, problem.noise),
    })

    if _oracle_feasible(cfg, problem):
        with timer.phase('exact_oracle'):
            exact = exact_posterior(train.X, train.y, problem.structure, problem.noise, X_star,
                                    dense_limit=cfg.dense_limit)
        report.metrics.update({
            'smae_vs_exact': smae(love_var, exact.variance, train.y),
            'max_relative_error_vs_exact': max_relative_error(love_var, exact.variance),
            'mean_mae_vs_exact': float(np.mean(np.abs(love_mean - exact.mean))),
            'log_likelihood_exact': predictive_log_likelihood(exact.mean, exact.variance, y_star, problem.noise),
        })
        if model.m_total <= cfg.dense_limit:
            with timer.phase('dense_ski_oracle'):
                dense = np.diag(dense_ski_covariance(model, W_star, X_star, prior='exact'))
            report.metrics['smae_vs_dense_ski'] = smae(love_var, dense, train.y)
    else:
        logger.info("Dense oracles skipped: training set exceeds the dense limit")

    report.save(cfg.output_path('variance.json'))
    logger.info(f"✅ Variance benchmark done: SMAE vs exact {report.metrics.get('smae_vs_exact')}, "
                f"vs dense SKI {report.metrics.get('smae_vs_dense_ski')}")
    return report


def run_sampling_benchmark(cfg: RunConfig) -> BenchmarkReport:
    """
    LOVE and exact-Cholesky posterior sampling at the test points

    Both sample covariances are compared element-wise with the exact
    posterior covariance. A single sample cannot estimate a covariance, so
    ``s = 1`` reports timings only and flags ``insufficient_samples``.
    """
    report = BenchmarkReport('sampling', cfg.to_dict())
    report.record_timing_repeats(cfg.timing_repeats)
    timer = PhaseTimer(report.timings)
    with timer.phase('data'):
        problem = prepare_problem(cfg)
    train = problem.dataset.train
    report.dataset = problem.dataset.summary()

    with timer.phase('precompute'):
        predictor = LovePredictor.from_model(problem.model, cfg.k, sample_k=cfg.sample_k)
    report.timings.update(predictor.timings)

    X_star = _test_points(cfg, problem.dataset)
    W_star = build_W(X_star, problem.structure)
    s = cfg.num_samples
    with timer.phase('love_sampling'):
        love_samples = predictor.sample(X_star, s, seed=cfg.seed)
    report.timings['love_sampling_median_s'] = median_wall_time(
        lambda: predictor.sample(X_star, s, seed=cfg.seed), cfg.timing_repeats
    )
    report.metrics.update({'num_test': int(X_star.shape[0]), 'num_samples': s,
                           'sample_k_effective': int(predictor.cache.S.shape[1])})

    if not _oracle_feasible(cfg, problem):
        logger.info("Exact sampling skipped: training set exceeds the dense limit")
        report.metrics['oracle_skipped'] = True
        report.save(cfg.output_path('sampling.json'))
        return report

    with timer.phase('exact_posterior'):
        exact = exact_posterior(train.X, train.y, problem.structure, problem.noise, X_star,
                                dense_limit=cfg.dense_limit)
    with timer.phase('exact_sampling'):
        exact_samples = exact_sample(exact, s, seed=cfg.seed)

    report.metrics['root_covariance_mae'] = elementwise_mae(root_covariance(predictor.cache, W_star), exact.cov)
    if s < 2:
        report.metrics['insufficient_samples'] = True
    else:
        love_mae = elementwise_mae(sample_covariance(love_samples), exact.cov)
        exact_mae = elementwise_mae(sample_covariance(exact_samples), exact.cov)
        report.metrics.update({
            'insufficient_samples': False,
            'love_sample_covariance_mae': love_mae,
            'exact_sample_covariance_mae': exact_mae,
            'mae_ratio': love_mae / exact_mae if exact_mae > 0 else float('inf'),
        })

    report.save(cfg.output_path('sampling.json'))
    return report


def _write_csv(rows: List[Dict[str, Any]], path: str) -> str:
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    pd.DataFrame(rows).to_csv(path, index=False)
    return path


def run_k_sweep(cfg: RunConfig) -> BenchmarkReport:
    """SMAE of LOVE variances against the dense oracles for every k in ``cfg.k_values``"""
    report = BenchmarkReport('k_sweep', cfg.to_dict())
    timer = PhaseTimer(report.timings)
    with timer.phase('data'):
        problem = prepare_problem(cfg)
    model, train = problem.model, problem.dataset.train
    report.dataset = problem.dataset.summary()
    if not _oracle_feasible(cfg, problem):
        raise ConfigError(f"k sweep needs the dense oracles; n={model.n} exceeds the dense limit {cfg.dense_limit}")

    X_star = _test_points(cfg, problem.dataset)
    W_star = build_W(X_star, problem.structure)
    prior = problem.structure.prior_variance()
    with timer.phase('oracles'):
        exact_var = exact_posterior(train.X, train.y, problem.structure, problem.noise, X_star,
                                    dense_limit=cfg.dense_limit).variance
        dense_var = np.diag(dense_ski_covariance(model, W_star, X_star, prior='exact'))

    rows = []
    for k in tqdm(cfg.k_values, desc="k sweep", unit="k"):
        start = time.perf_counter()
        R, R_prime = love_precompute(model, k)
        elapsed = time.perf_counter() - start
        cache = LoveCache(a=np.zeros(model.m_total), R=R, R_prime=R_prime, k=int(k))
        love_var = predict_variances(cache, W_star, prior)
        rows.append({
            'k': int(k),
            'k_effective': cache.k_effective,
            'smae_vs_dense_ski': smae(love_var, dense_var, train.y),
            'smae_vs_exact': smae(love_var, exact_var, train.y),
            'precompute_s': elapsed,
        })

    report.metrics['rows'] = rows
    report.outputs['csv'] = _write_csv(rows, cfg.output_path('k_sweep.csv'))
    report.save(cfg.output_path('k_sweep.json'))
    return report


def run_scaling(cfg: RunConfig) -> BenchmarkReport:
    """Precompute and per-query times as the training set grows, at fixed grid size and k"""
    report = BenchmarkReport('scaling', cfg.to_dict())
    report.record_timing_repeats(cfg.timing_repeats)
    scaling_cfg = replace(cfg, fit_steps=0)
    rows = []
    for n_train in tqdm(cfg.scaling_sizes, desc="scaling", unit="size"):
        n_total = int(np.ceil(n_train / cfg.split))
        problem = prepare_problem(scaling_cfg, build_dataset(scaling_cfg, n=n_total))
        start = time.perf_counter()
        predictor = LovePredictor.from_model(problem.model, cfg.k)
        precompute = time.perf_counter() - start

        cache = predictor.cache
        row = build_W(_test_points(cfg, problem.dataset)[:1], problem.structure).row(0)
        prior = problem.structure.prior_variance()
        rows.append({
            'n': problem.model.n,
            'm_total': problem.model.m_total,
            'k_effective': cache.k_effective,
            'precompute_s': precompute,
            'variance_query_s': median_wall_time(lambda: predict_covar(cache, row, row, prior), cfg.timing_repeats),
            'mean_query_s': median_wall_time(lambda: predict_mean(cache, row), cfg.timing_repeats),
        })

    report.metrics['rows'] = rows
    report.outputs['csv'] = _write_csv(rows, cfg.output_path('scaling.csv'))
    report.save(cfg.output_path('scaling.json'))
    return report
