"""VAR(1) OLS fit and sampling."""

import numpy as np
import pytest

from corrcast.baselines import VarModel, fit_var1, var_forecast


def simulate_var1(intercept, coefficients, noise_chol, n_steps, seed):
    rng = np.random.default_rng(seed)
    n = len(intercept)
    data = np.zeros((n_steps, n))
    for t in range(1, n_steps):
        data[t] = (
            intercept
            + coefficients @ data[t - 1]
            + noise_chol @ rng.standard_normal(n)
        )
    return data


class TestFitVar1:
    def test_noiseless_exact_recovery(self):
        # A slow spiral keeps the noiseless trajectory full rank instead of
        # collapsing onto the fixed point, so OLS interpolates exactly.
        intercept = np.array([0.5, -0.2])
        angle = 0.7
        coefficients = 0.99 * np.array(
            [[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]]
        )
        data = np.zeros((30, 2))
        data[0] = [3.0, -1.0]
        for t in range(1, 30):
            data[t] = intercept + coefficients @ data[t - 1]
        model = fit_var1(data)
        np.testing.assert_allclose(model.intercept, intercept, atol=1e-8)
        np.testing.assert_allclose(model.coefficients, coefficients, atol=1e-8)
        np.testing.assert_allclose(model.noise_cov, 0.0, atol=1e-16)

    def test_univariate_simulation_recovery(self):
        data = simulate_var1(
            np.zeros(1), np.array([[0.5]]), np.eye(1), 100_000, seed=1
        )
        model = fit_var1(data)
        assert model.coefficients[0, 0] == pytest.approx(0.5, abs=0.01)

    def test_constant_series_rank_deficient(self):
        with pytest.raises(ValueError):
            fit_var1(np.ones((50, 2)))

    def test_too_short(self):
        with pytest.raises(ValueError):
            fit_var1(np.random.default_rng(0).standard_normal((3, 2)))

    def test_residuals_orthogonal_to_regressors(self):
        rng = np.random.default_rng(2)
        data = simulate_var1(
            np.array([0.1, 0.0, -0.1]),
            0.3 * np.eye(3),
            np.linalg.cholesky(np.eye(3) + 0.5),
            2000,
            seed=3,
        )
        model = fit_var1(data)
        regressors = np.column_stack([np.ones(len(data) - 1), data[:-1]])
        residuals = data[1:] - (
            model.intercept + data[:-1] @ model.coefficients.T
        )
        crossed = regressors.T @ residuals / len(residuals)
        assert np.max(np.abs(crossed)) <= 1e-8

    def test_noise_cov_symmetric_psd(self):
        rng = np.random.default_rng(4)
        data = rng.standard_normal((200, 3))
        model = fit_var1(data)
        np.testing.assert_allclose(model.noise_cov, model.noise_cov.T)
        assert np.linalg.eigvalsh(model.noise_cov).min() >= -1e-12


class TestVarForecast:
    def test_zero_noise_deterministic(self):
        model = VarModel(
            intercept=np.array([1.0]),
            coefficients=np.array([[0.5]]),
            noise_cov=np.zeros((1, 1)),
        )
        out = var_forecast(model, np.array([2.0]), horizon=3, n_paths=2, seed=0)
        expected = [2.0, 2.0, 2.0]  # fixed point of z -> 1 + 0.5 z from z=2
        np.testing.assert_allclose(out[0, :, 0], expected)
        np.testing.assert_array_equal(out[0], out[1])

    def test_reproducible(self):
        model = VarModel(
            intercept=np.zeros(2),
            coefficients=0.4 * np.eye(2),
            noise_cov=np.eye(2),
        )
        a = var_forecast(model, np.ones(2), horizon=4, n_paths=3, seed=5)
        b = var_forecast(model, np.ones(2), horizon=4, n_paths=3, seed=5)
        np.testing.assert_array_equal(a, b)

    def test_one_step_mean(self):
        model = VarModel(
            intercept=np.array([0.3, -0.1]),
            coefficients=np.array([[0.5, 0.2], [0.0, 0.7]]),
            noise_cov=0.5 * np.eye(2),
        )
        last = np.array([1.0, -2.0])
        n = 10_000
        out = var_forecast(model, last, horizon=1, n_paths=n, seed=7)
        expected = model.intercept + model.coefficients @ last
        mc_std = np.sqrt(0.5 / n)
        assert np.all(np.abs(out[:, 0, :].mean(axis=0) - expected) < 4 * mc_std)
