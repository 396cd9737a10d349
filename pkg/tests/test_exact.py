"""Dense exact-GP reference: posterior, sampling, marginal likelihood and fitting"""

import numpy as np
import pytest

from src.core.exact import (
    ExactPosterior,
    covariance_function,
    exact_posterior,
    exact_sample,
    finite_difference_gradient,
    fit_hyperparameters,
    log_marginal_likelihood,
    predictive_log_likelihood,
)
from src.core.kernels import AdditiveStructure, Grid1D, KernelParams, additive_covariance, build_structure
from src.utils.exceptions import ConfigError, DimensionMismatchError, NumericalError


def rbf_structure(outputscale=1.0, lengthscale=0.2, lo=0.0, hi=1.0, m=20):
    return build_structure(np.array([lo, hi]), [KernelParams.rbf(outputscale, lengthscale)], [m])


class TestExactPosterior:

    def test_interpolates_with_tiny_noise(self):
        x = np.array([0.1, 0.4, 0.7, 0.95])
        y = np.array([1.0, -0.5, 0.3, 2.0])
        p = exact_posterior(x, y, rbf_structure(lengthscale=0.1), 1e-8, x)
        np.testing.assert_allclose(p.mean, y, atol=1e-5)
        assert np.all(p.variance < 1e-6)

    def test_no_training_data_gives_prior(self):
        structure = rbf_structure()
        x_star = np.array([0.2, 0.5])
        p = exact_posterior(np.zeros((0, 1)), np.zeros(0), structure, 0.1, x_star)
        np.testing.assert_array_equal(p.mean, 0.0)
        np.testing.assert_allclose(p.cov, additive_covariance(structure, x_star, x_star))

    def test_matches_hand_computation(self):
        structure = rbf_structure(outputscale=1.5, lengthscale=0.3)
        x = np.array([0.1, 0.5, 0.8])
        y = np.array([0.3, -0.2, 1.1])
        x_star = np.array([0.2, 0.6])
        K = additive_covariance(structure, x, x) + 0.2 * np.eye(3)
        K_s = additive_covariance(structure, x_star, x)
        p = exact_posterior(x, y, structure, 0.2, x_star)
        np.testing.assert_allclose(p.mean, K_s @ np.linalg.solve(K, y), atol=1e-12)
        expected = additive_covariance(structure, x_star, x_star) - K_s @ np.linalg.solve(K, K_s.T)
        np.testing.assert_allclose(p.cov, expected, atol=1e-12)

    def test_posterior_contracts_prior(self, rng):
        structure = rbf_structure()
        x = rng.uniform(0, 1, 30)
        x_star = np.linspace(0, 1, 10)
        p = exact_posterior(x, np.sin(6 * x), structure, 0.05, x_star)
        assert np.all(p.variance <= structure.prior_variance() + 1e-12)
        assert np.all(p.variance >= -1e-10)

    def test_accepts_covariance_callables(self):
        structure = rbf_structure()
        x = np.array([0.2, 0.6])
        direct = exact_posterior(x, np.ones(2), structure, 0.1, x)
        via_callable = exact_posterior(x, np.ones(2), covariance_function(structure), 0.1, x)
        np.testing.assert_allclose(direct.cov, via_callable.cov)

    def test_dense_limit(self):
        with pytest.raises(ConfigError):
            exact_posterior(np.linspace(0, 1, 10), np.zeros(10), rbf_structure(), 0.1, np.array([0.5]),
                            dense_limit=5)

    def test_rejects_negative_noise_and_bad_shapes(self):
        with pytest.raises(ConfigError):
            exact_posterior(np.array([0.5]), np.array([1.0]), rbf_structure(), -1.0, np.array([0.5]))
        with pytest.raises(DimensionMismatchError):
            exact_posterior(np.array([0.5, 0.6]), np.array([1.0]), rbf_structure(), 0.1, np.array([0.5]))

    def test_unknown_covariance_kind(self):
        with pytest.raises(ConfigError):
            covariance_function(rbf_structure(), "nystrom")


class TestExactSampling:

    def test_zero_covariance_repeats_mean(self):
        p = ExactPosterior(np.array([1.0, 2.0]), np.zeros((2, 2)))
        np.testing.assert_array_equal(exact_sample(p, 4, seed=0), [[1.0] * 4, [2.0] * 4])

    def test_identity_covariance(self):
        p = ExactPosterior(np.zeros(2), np.eye(2))
        samples = exact_sample(p, 20000, seed=5)
        assert samples.shape == (2, 20000)
        np.testing.assert_allclose(np.cov(samples), np.eye(2), atol=0.05)

    def test_seed_reproducibility(self):
        p = ExactPosterior(np.zeros(3), np.eye(3) + 0.5)
        np.testing.assert_array_equal(exact_sample(p, 3, seed=9), exact_sample(p, 3, seed=9))

    def test_rejects_zero_samples(self):
        with pytest.raises(ConfigError):
            exact_sample(ExactPosterior(np.zeros(1), np.eye(1)), 0)


class TestMarginalLikelihood:

    def test_single_point(self):
        structure = rbf_structure(outputscale=0.5)
        # K = 0.5 + 0.5 = 1
        assert log_marginal_likelihood(np.array([0.3]), np.array([0.0]), structure, 0.5) == pytest.approx(
            -0.918938533, abs=1e-8)
        assert log_marginal_likelihood(np.array([0.3]), np.array([1.0]), structure, 0.5) == pytest.approx(
            -1.418938533, abs=1e-8)

    def test_matches_slogdet(self, rng):
        structure = rbf_structure()
        x, y = rng.uniform(0, 1, 5), rng.standard_normal(5)
        K = additive_covariance(structure, x, x) + 0.1 * np.eye(5)
        _, logdet = np.linalg.slogdet(K)
        expected = -0.5 * y @ np.linalg.solve(K, y) - 0.5 * logdet - 2.5 * np.log(2 * np.pi)
        assert log_marginal_likelihood(x, y, structure, 0.1) == pytest.approx(expected, rel=1e-10)

    def test_empty_data(self):
        assert log_marginal_likelihood(np.zeros((0, 1)), np.zeros(0), rbf_structure(), 0.1) == 0.0

    def test_finite_difference_gradient(self, rng):
        structure = rbf_structure()
        x, y = rng.uniform(0, 1, 20), rng.standard_normal(20)

        def objective(theta):
            return log_marginal_likelihood(x, y, structure.from_vector(theta[:-1]), float(np.exp(theta[-1])))

        theta = np.concatenate([structure.to_vector(), [np.log(0.1)]])
        gradient = finite_difference_gradient(objective, theta)
        direction = rng.standard_normal(theta.size)
        direction /= np.linalg.norm(direction)
        step = 1e-3
        directional = (objective(theta + step * direction) - objective(theta - step * direction)) / (2 * step)
        assert gradient @ direction == pytest.approx(directional, rel=0.05, abs=1e-6)

    def test_gradient_skips_non_finite_sides(self):
        gradient = finite_difference_gradient(lambda t: -np.inf if t[0] > 0 else 0.0, np.zeros(2))
        np.testing.assert_array_equal(gradient, 0.0)


class TestPredictiveLogLikelihood:

    def test_standard_normal(self):
        value = predictive_log_likelihood([0.0, 0.0], [1.0, 1.0], [0.0, 1.0])
        assert value == pytest.approx(2 * -0.918938533 - 0.5, abs=1e-8)

    def test_noise_is_added(self):
        assert predictive_log_likelihood([0.0], [0.5], [0.0], noise=0.5) == pytest.approx(-0.918938533, abs=1e-8)

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            predictive_log_likelihood([0.0], [1.0, 1.0], [0.0])


class TestHyperparameterFit:

    def _data(self, n=200, lengthscale=0.1, noise=0.01, seed=0):
        rng = np.random.default_rng(seed)
        x = np.sort(rng.uniform(0, 1, n))
        structure = rbf_structure(lengthscale=lengthscale)
        K = additive_covariance(structure, x, x) + noise * np.eye(n)
        y = np.linalg.cholesky(K) @ rng.standard_normal(n)
        return x, y

    def test_zero_steps_returns_initialization(self):
        x, y = self._data(n=20)
        init = rbf_structure(lengthscale=0.5)
        structure, noise = fit_hyperparameters(x, y, init, 0.3, steps=0)
        assert structure is init
        assert noise == 0.3

    def test_best_objective_never_decreases(self):
        x, y = self._data(n=40)
        history = []
        fit_hyperparameters(x, y, rbf_structure(lengthscale=0.5), 0.5, steps=15, lr=0.05, history=history)
        assert len(history) == 15
        assert all(b >= a for a, b in zip(history, history[1:]))

    @pytest.mark.slow
    def test_recovers_lengthscale(self):
        x, y = self._data()
        structure, noise = fit_hyperparameters(x, y, rbf_structure(lengthscale=0.3), 0.1, steps=150, lr=0.05)
        fitted = structure.components[0].kernel.lengthscale
        assert fitted == pytest.approx(0.1, rel=0.3)
        assert noise >= 1e-4

    def test_noise_floor(self):
        x, y = self._data(n=30)
        _, noise = fit_hyperparameters(x, y, rbf_structure(), 1e-9, steps=2, noise_floor=1e-3)
        assert noise >= 1e-3

    def test_non_finite_initialization(self):
        x, y = self._data(n=10)
        bad = AdditiveStructure.single(
            KernelParams.rbf().from_vector(np.array([np.nan, 0.0])), Grid1D(-0.5, 0.1, 20))
        with pytest.raises(NumericalError):
            fit_hyperparameters(x, y, bad, 0.1, steps=3)
