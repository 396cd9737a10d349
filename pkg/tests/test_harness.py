"""Run configuration, datasets, metrics, benchmark workflows and the CLI"""

import json
import os

import numpy as np
import pandas as pd
import pytest

from src.harness.benchmark import (
    BenchmarkReport,
    PhaseTimer,
    prepare_problem,
    run_fit,
    run_k_sweep,
    run_precompute,
    run_predict,
    run_sample,
    run_sampling_benchmark,
    run_scaling,
    run_variance_benchmark,
)
from src.harness.datasets import (
    load_airline,
    load_dataset,
    make_styblinski_tang,
    make_synthetic_1d,
    styblinski_tang,
)
from src.harness.metrics import elementwise_mae, max_relative_error, sample_covariance, smae
from src.harness.run_config import RunConfig, load_run_config
from src.ui.cli import main
from src.utils.exceptions import ConfigError, DataError


def small_cfg(tmp_path, **overrides):
    settings = dict(
        name="small", dataset="synthetic", n=200, grid_sizes=[64], noise=0.04,
        kernel={'type': 'rbf', 'outputscale': 1.0, 'lengthscale': 0.3},
        k=100, sample_k=64, num_samples=200, num_test=20, k_values=[2, 5, 64],
        timing_repeats=1, output_dir=str(tmp_path),
    )
    settings.update(overrides)
    return RunConfig(**settings)


def write_csv(path, text):
    path.write_text(text)
    return str(path)


class TestRunConfig:

    def test_defaults_are_valid(self):
        cfg = RunConfig()
        assert cfg.dataset == "synthetic"
        assert cfg.grid_sizes_for(3) == [cfg.grid_sizes[0]] * 3

    @pytest.mark.parametrize("field_name, value", [
        ("split", 1.5), ("k", 0), ("noise", 0.0), ("grid_sizes", [3]), ("num_samples", 0),
        ("dataset", "no/such/file.csv"), ("lr", 0.0), ("num_test", 0), ("num_test", -5),
    ])
    def test_validation(self, field_name, value):
        with pytest.raises(ConfigError):
            RunConfig(**{field_name: value})

    def test_yaml_file(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("name: yaml_run\nn: 300\ngrid_sizes: [50]\nkernel:\n  type: rbf\n  lengthscale: 0.5\n")
        cfg = RunConfig.from_file(str(path))
        assert cfg.name == "yaml_run"
        assert cfg.n == 300
        assert cfg.kernel_specs(1) == [{'type': 'rbf', 'lengthscale': 0.5}]

    def test_unknown_field_in_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({'nmae': 'typo'}))
        with pytest.raises(ConfigError):
            RunConfig.from_file(str(path))

    def test_overrides(self):
        cfg = load_run_config(preset="synthetic", overrides={'k': 7, 'seed': None})
        assert cfg.k == 7
        assert cfg.seed == RunConfig.from_preset("synthetic").seed
        with pytest.raises(ConfigError):
            cfg.with_overrides({'not_a_field': 1})

    def test_presets(self):
        assert RunConfig.from_preset("synthetic").n == 625
        assert RunConfig.from_preset("airline").dataset == "airline"
        with pytest.raises(ConfigError):
            RunConfig.from_preset("does_not_exist")

    def test_kernel_and_grid_lists(self):
        cfg = RunConfig(kernel=[{'type': 'rbf'}, {'type': 'rbf'}], grid_sizes=[10, 20])
        assert len(cfg.kernel_specs(2)) == 2
        assert cfg.grid_sizes_for(2) == [10, 20]
        with pytest.raises(ConfigError):
            cfg.kernel_specs(3)
        with pytest.raises(ConfigError):
            cfg.grid_sizes_for(3)


class TestDatasets:

    def test_split_sizes_and_standardization(self, tmp_path):
        rows = "\n".join(f"{i},{2 * i + 1}" for i in range(10))
        dataset = load_dataset(write_csv(tmp_path / "d.csv", "x,y\n" + rows + "\n"), split=0.8, seed=3)
        train, test = dataset
        assert (train.n, test.n) == (8, 2)
        assert train.y.mean() == pytest.approx(0.0, abs=1e-12)
        assert train.y.std() == pytest.approx(1.0)
        assert dataset.feature_names == ('x',)

    def test_split_is_seeded(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "x,y\n" + "\n".join(f"{i},{i * i}" for i in range(20)) + "\n")
        first, second = load_dataset(path, seed=5), load_dataset(path, seed=5)
        np.testing.assert_array_equal(first.train.X, second.train.X)
        assert not np.array_equal(first.train.X, load_dataset(path, seed=6).train.X)

    def test_non_numeric_rows_rejected(self, tmp_path):
        rows = [f"{i},{i}" for i in range(10)] + ["abc,1", ",2"]
        dataset = load_dataset(write_csv(tmp_path / "d.csv", "x,y\n" + "\n".join(rows) + "\n"))
        assert dataset.rejected_rows == 2
        assert dataset.train.n + dataset.test.n == 10

    def test_missing_target(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "x,y\n1,2\n3,4\n")
        with pytest.raises(ConfigError):
            load_dataset(path, target="z")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_dataset(str(tmp_path / "absent.csv"))

    def test_no_usable_rows(self, tmp_path):
        with pytest.raises(DataError):
            load_dataset(write_csv(tmp_path / "d.csv", "x,y\na,b\n"))

    def test_airline_split_is_chronological(self):
        dataset = load_airline()
        assert dataset.train.n == 96
        assert dataset.test.n == 48
        assert dataset.train.X.max() < dataset.test.X.min()

    def test_synthetic_1d(self):
        X, y = make_synthetic_1d(40, seed=3)
        assert X.shape == (40, 1) and y.shape == (40,)
        assert np.all((X >= 0.0) & (X <= 1.0))
        X_again, y_again = make_synthetic_1d(40, seed=3)
        np.testing.assert_array_equal(y, y_again)

    def test_styblinski_tang(self):
        X, y = make_styblinski_tang(50, 3, seed=1)
        assert X.shape == (50, 3) and y.shape == (50,)
        assert np.all(np.abs(X) <= 5.0)
        minimum = np.full((1, 2), -2.903534)
        assert styblinski_tang(minimum)[0] == pytest.approx(-39.16617 * 2, rel=1e-5)


class TestMetrics:

    def test_smae(self):
        assert smae([1.0, 2.0], [1.0, 3.0], [0.0, 2.0]) == pytest.approx(0.5)
        with pytest.raises(DataError):
            smae([1.0], [1.0], [3.0, 3.0])

    def test_errors(self):
        assert max_relative_error([1.1, 2.0], [1.0, 2.0]) == pytest.approx(0.1)
        assert elementwise_mae(np.ones((2, 2)), np.zeros((2, 2))) == 1.0

    def test_sample_covariance_needs_two_samples(self):
        with pytest.raises(DataError):
            sample_covariance(np.ones((3, 1)))
        assert sample_covariance(np.array([[0.0, 2.0]])).shape == (1, 1)


class TestBenchmarks:

    def test_phase_timer_adds_context(self):
        timings = {}
        with pytest.raises(DataError, match=r"\[load\]"):
            with PhaseTimer(timings).phase("load"):
                raise DataError("broken")
        assert "load_s" in timings

    def test_prepare_problem_covers_test_inputs(self, tmp_path):
        problem = prepare_problem(small_cfg(tmp_path))
        assert problem.model.n == 160
        assert problem.model.m_total == 64
        grid = problem.structure.components[0].grid
        lo, hi = grid.interpolable_range
        assert lo <= problem.dataset.all_X.min() and problem.dataset.all_X.max() <= hi

    def test_variance_benchmark(self, tmp_path):
        report = run_variance_benchmark(small_cfg(tmp_path))
        assert report.metrics['smae_vs_dense_ski'] < 1e-4
        assert report.metrics['smae_vs_exact'] < 1e-2
        assert report.metrics['k_effective'] <= 64
        for name in ('precompute_s', 'variance_query_s', 'mean_query_s', 'variance_from_scratch_s'):
            assert report.timings[name] >= 0
        with open(tmp_path / "small_variance.json", encoding="utf-8") as f:
            saved = json.load(f)
        assert saved['metrics']['smae_vs_dense_ski'] == pytest.approx(report.metrics['smae_vs_dense_ski'])
        assert saved['config']['grid_sizes'] == [64]
        assert saved['metrics']['timing_repeats'] == 1
        assert saved['metrics']['timing_below_minimum'] is True

    def test_enough_timing_repeats_not_flagged(self):
        report = BenchmarkReport('variance', {})
        report.record_timing_repeats(20)
        assert report.metrics == {'timing_repeats': 20, 'timing_below_minimum': False}

    def test_variance_benchmark_is_deterministic(self, tmp_path):
        first = run_variance_benchmark(small_cfg(tmp_path / "a"))
        second = run_variance_benchmark(small_cfg(tmp_path / "b"))
        for name in ('smae_vs_exact', 'smae_vs_dense_ski', 'log_likelihood_love'):
            assert first.metrics[name] == pytest.approx(second.metrics[name], rel=1e-12)

    def test_oracles_skipped_above_dense_limit(self, tmp_path):
        report = run_variance_benchmark(small_cfg(tmp_path, dense_limit=50))
        assert 'smae_vs_exact' not in report.metrics
        assert 'log_likelihood_love' in report.metrics

    def test_sampling_benchmark(self, tmp_path):
        report = run_sampling_benchmark(small_cfg(tmp_path, num_samples=500, num_test=10))
        assert report.metrics['insufficient_samples'] is False
        assert report.metrics['root_covariance_mae'] < 1e-3
        assert report.metrics['love_sample_covariance_mae'] > 0
        assert np.isfinite(report.metrics['mae_ratio'])

    def test_single_sample_is_flagged(self, tmp_path):
        report = run_sampling_benchmark(small_cfg(tmp_path, num_samples=1, num_test=5))
        assert report.metrics['insufficient_samples'] is True
        assert 'love_sample_covariance_mae' not in report.metrics

    def test_k_sweep_csv(self, tmp_path):
        report = run_k_sweep(small_cfg(tmp_path))
        frame = pd.read_csv(report.outputs['csv'])
        assert list(frame['k']) == [2, 5, 64]
        assert set(frame.columns) >= {'k', 'k_effective', 'smae_vs_dense_ski', 'smae_vs_exact', 'precompute_s'}
        assert frame['smae_vs_dense_ski'].iloc[-1] < 1e-4

    def test_k_sweep_needs_oracles(self, tmp_path):
        with pytest.raises(ConfigError):
            run_k_sweep(small_cfg(tmp_path, oracles=False))

    def test_scaling_rows(self, tmp_path):
        report = run_scaling(small_cfg(tmp_path, scaling_sizes=[64, 128], k=10))
        rows = report.metrics['rows']
        assert [row['n'] for row in rows] == [64, 128]
        assert all(row['m_total'] == 64 for row in rows)
        assert os.path.exists(report.outputs['csv'])

    def test_precompute_predict_sample_pipeline(self, tmp_path):
        cfg = small_cfg(tmp_path, cache_path=str(tmp_path / "cache.npz"), num_samples=3)
        run_precompute(cfg)
        assert os.path.exists(tmp_path / "cache.npz")

        predictions = pd.read_csv(run_predict(cfg).outputs['predictions'])
        assert list(predictions.columns) == ['x0', 'mean', 'variance']
        assert len(predictions) == 20
        assert (predictions['variance'] >= 0).all()

        samples = pd.read_csv(run_sample(cfg).outputs['samples'])
        assert samples.shape == (20, 1 + 3)

    def test_fit_writes_hyperparameters(self, tmp_path):
        report = run_fit(small_cfg(tmp_path, n=60, fit_steps=3))
        with open(report.outputs['hyperparameters'], encoding="utf-8") as f:
            payload = json.load(f)
        assert payload['kernels'][0]['type'] == 'rbf'
        assert payload['noise'] > 0

        reused = prepare_problem(small_cfg(tmp_path, n=60, hyperparameters_path=report.outputs['hyperparameters']))
        assert reused.noise == pytest.approx(payload['noise'])


class TestCommandLine:

    def test_success(self, tmp_path):
        code = main(['fit', '--n', '50', '-m', '32', '-o', str(tmp_path), '--name', 'cli'])
        assert code == 0
        assert os.path.exists(tmp_path / "cli_hyperparameters.json")

    def test_configuration_error_exit_code(self, tmp_path):
        assert main(['bench-variance', '--dataset', str(tmp_path / "missing.csv")]) == 2

    def test_data_error_exit_code(self, tmp_path):
        path = write_csv(tmp_path / "bad.csv", "x,y\na,b\n")
        assert main(['bench-variance', '--dataset', path, '-o', str(tmp_path)]) == 4

    def test_unknown_preset(self):
        assert main(['precompute', '--preset', 'nope']) == 2

    def test_empty_test_set_is_a_configuration_error(self, tmp_path):
        assert main(['bench-variance', '--n', '50', '-m', '32', '-t', '0', '-o', str(tmp_path)]) == 2
