#!/usr/bin/env python3
"""
Command Line Interface Module
Dispatches harness subcommands and maps library errors to exit codes
"""

import argparse
from typing import Any, Callable, Dict, Optional

from ..harness.benchmark import (
    BenchmarkReport,
    run_fit,
    run_k_sweep,
    run_precompute,
    run_predict,
    run_sample,
    run_sampling_benchmark,
    run_scaling,
    run_variance_benchmark,
)
from ..harness.run_config import RunConfig, load_run_config
from ..utils.exceptions import LoveError
from ..utils.logger import get_logger

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1

# argparse destination -> RunConfig field
OVERRIDE_FIELDS = {
    'name': 'name',
    'dataset': 'dataset',
    'target': 'target',
    'split': 'split',
    'seed': 'seed',
    'n': 'n',
    'dims': 'dims',
    'noise': 'noise',
    'grid_size': 'grid_sizes',
    'k': 'k',
    'sample_k': 'sample_k',
    'fit_steps': 'fit_steps',
    'lr': 'lr',
    'hyperparameters': 'hyperparameters_path',
    'num_samples': 'num_samples',
    'num_test': 'num_test',
    'k_values': 'k_values',
    'scaling_sizes': 'scaling_sizes',
    'oracles': 'oracles',
    'dense_limit': 'dense_limit',
    'timing_repeats': 'timing_repeats',
    'output_dir': 'output_dir',
    'cache': 'cache_path',
    'query': 'query_path',
}


def overrides_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    """RunConfig overrides for every flag given on the command line"""
    return {
        field_name: getattr(args, dest)
        for dest, field_name in OVERRIDE_FIELDS.items()
        if getattr(args, dest, None) is not None
    }


class CLI:
    """Command Line Interface Class"""

    def __init__(self):
        """Initialize CLI"""
        self.handlers: Dict[str, Callable[[RunConfig], BenchmarkReport]] = {
            'fit': self._handle_fit,
            'precompute': self._handle_precompute,
            'predict': self._handle_predict,
            'sample': self._handle_sample,
            'bench-variance': self._handle_bench_variance,
            'bench-sampling': self._handle_bench_sampling,
            'sweep-k': self._handle_sweep_k,
            'scaling': self._handle_scaling,
        }

    def run(self, args: argparse.Namespace) -> int:
        """
        Execute one subcommand

        Returns:
            Process exit code: 0 success, 2 configuration error, 3 numerical
            failure, 4 data error, 1 anything else
        """
        handler = self.handlers.get(args.command)
        if handler is None:
            print(f"❌ Unknown command: {args.command}")
            return EXIT_FAILURE
        try:
            cfg = load_run_config(args.config, args.preset, overrides_from_args(args))
            logger.info(f"Running {args.command} for '{cfg.name}' on dataset {cfg.dataset}")
            report = handler(cfg)
        except LoveError as e:
            logger.error(f"❌ {args.command} failed: {e}")
            print(f"❌ {type(e).__name__}: {e}")
            return e.exit_code
        except KeyboardInterrupt:
            print("\n👋 Interrupted")
            return EXIT_FAILURE
        except Exception as e:
            logger.exception(f"❌ Unexpected failure in {args.command}: {e}")
            print(f"❌ Unexpected error: {e}")
            return EXIT_FAILURE

        self._display_report(report)
        return EXIT_OK

    def _display_report(self, report: BenchmarkReport):
        """Print the headline numbers of a report"""
        print("\n" + "=" * 60)
        print(f"📊 {report.kind} report")
        print("=" * 60)
        if report.dataset:
            print(f"📦 Data: {report.dataset.get('n_train')} train / {report.dataset.get('n_test')} test"
                  f" ({report.dataset.get('rejected_rows', 0)} rejected rows)")
        for name, value in report.metrics.items():
            if name == 'rows':
                for row in value:
                    print("   • " + ", ".join(f"{k}={_short(v)}" for k, v in row.items()))
            else:
                print(f"   • {name}: {_short(value)}")
        for name, seconds in sorted(report.timings.items()):
            print(f"   ⏱  {name}: {seconds:.6f}")
        for name, path in report.outputs.items():
            print(f"   📁 {name}: {path}")

    def _handle_fit(self, cfg: RunConfig) -> BenchmarkReport:
        return run_fit(cfg)

    def _handle_precompute(self, cfg: RunConfig) -> BenchmarkReport:
        return run_precompute(cfg)

    def _handle_predict(self, cfg: RunConfig) -> BenchmarkReport:
        return run_predict(cfg)

    def _handle_sample(self, cfg: RunConfig) -> BenchmarkReport:
        return run_sample(cfg)

    def _handle_bench_variance(self, cfg: RunConfig) -> BenchmarkReport:
        return run_variance_benchmark(cfg)

    def _handle_bench_sampling(self, cfg: RunConfig) -> BenchmarkReport:
        return run_sampling_benchmark(cfg)

    def _handle_sweep_k(self, cfg: RunConfig) -> BenchmarkReport:
        return run_k_sweep(cfg)

    def _handle_scaling(self, cfg: RunConfig) -> BenchmarkReport:
        return run_scaling(cfg)


def _short(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per workflow"""
    parser = argparse.ArgumentParser(description="KISS-GP with LOVE: fast predictive variances and sampling")
    parser.add_argument('--log-level', type=str, help='Console log level (DEBUG, INFO, WARNING, ...)')
    subparsers = parser.add_subparsers(dest='command', required=True)

    descriptions = {
        'fit': 'Fit hyperparameters with ADAM on the exact marginal likelihood',
        'precompute': 'Build and save the LOVE caches',
        'predict': 'Predictive means and variances from a saved cache',
        'sample': 'Posterior samples from a saved cache',
        'bench-variance': 'LOVE variances vs exact GP and dense KISS-GP',
        'bench-sampling': 'LOVE sampling vs exact Cholesky sampling',
        'sweep-k': 'Variance accuracy across Lanczos iteration counts',
        'scaling': 'Per-query time as the training set grows',
    }
    for command, help_text in descriptions.items():
        sub = subparsers.add_parser(command, help=help_text, description=help_text)
        _add_run_arguments(sub)
    return parser


def _add_run_arguments(parser: argparse.ArgumentParser):
    source = parser.add_mutually_exclusive_group()
    source.add_argument('-c', '--config', type=str, help='Run configuration (JSON or YAML)')
    source.add_argument('-p', '--preset', type=str, help='Preset under config/presets (synthetic, airline, ...)')

    parser.add_argument('--name', type=str, help='Run name used in output file names')
    parser.add_argument('--dataset', type=str, help='CSV path or synthetic | styblinski_tang | airline')
    parser.add_argument('--target', type=str, help='Target column of a CSV dataset')
    parser.add_argument('--split', type=float, help='Training fraction')
    parser.add_argument('--seed', type=int, help='Split and sampling seed')
    parser.add_argument('--n', type=int, help='Rows of a synthetic dataset')
    parser.add_argument('--dims', type=int, help='Input dimensions of styblinski_tang')
    parser.add_argument('--noise', type=float, help='Noise variance (standardized units)')
    parser.add_argument('-m', '--grid-size', type=int, nargs='+', help='Grid size per component')
    parser.add_argument('-k', '--k', type=int, help='Lanczos iterations for the variance cache')
    parser.add_argument('--sample-k', type=int, help='Lanczos iterations for the sampling cache')
    parser.add_argument('--fit-steps', type=int, help='ADAM steps before building the model')
    parser.add_argument('--lr', type=float, help='ADAM learning rate')
    parser.add_argument('--hyperparameters', type=str, help='Fitted hyperparameter JSON to use')
    parser.add_argument('-s', '--num-samples', type=int, help='Number of posterior samples')
    parser.add_argument('-t', '--num-test', type=int, help='Limit the number of test points')
    parser.add_argument('--k-values', type=int, nargs='+', help='k values for sweep-k')
    parser.add_argument('--scaling-sizes', type=int, nargs='+', help='Training sizes for scaling')
    parser.add_argument('--no-oracles', dest='oracles', action='store_const', const=False,
                        help='Skip the dense oracles')
    parser.add_argument('--dense-limit', type=int, help='Largest n for the dense oracles')
    parser.add_argument('--timing-repeats', type=int, help='Timed repetitions per measurement')
    parser.add_argument('-o', '--output-dir', type=str, help='Directory for reports and CSVs')
    parser.add_argument('--cache', type=str, help='Cache file (.npz) to write or read')
    parser.add_argument('--query', type=str, help='CSV of query points with the feature columns')


def main(argv: Optional[list] = None) -> int:
    """Parse arguments and run (no environment or logger setup)"""
    args = build_parser().parse_args(argv)
    return CLI().run(args)
