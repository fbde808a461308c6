"""Forecast metrics against closed forms and brute-force pair enumeration."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from corrcast.metrics import (
    EvaluationReport,
    ForecastSamples,
    crps,
    crps_sum,
    energy_score,
    evaluate_instance,
    quantile_loss,
    rrmse,
)


def brute_force_crps(samples, obs):
    n = len(samples)
    term_obs = np.mean(np.abs(samples - obs))
    term_pair = np.mean(np.abs(samples[:, None] - samples[None, :]))
    return term_obs - 0.5 * term_pair


def gaussian_crps(obs, mean=0.0, sd=1.0):
    """Closed-form CRPS of N(mean, sd^2) at obs."""
    z = (obs - mean) / sd
    return sd * (z * (2 * norm.cdf(z) - 1) + 2 * norm.pdf(z) - 1 / np.sqrt(np.pi))


class TestCrps:
    def test_degenerate_forecast_is_zero(self):
        assert crps(np.full(10, 3.0), 3.0) == pytest.approx(0.0, abs=1e-12)

    def test_two_sample_enumeration(self):
        # samples {0, 2}, obs 1: term1 = 1, pair term = mean(|0-2|,|2-0|,0,0)/2
        assert crps(np.array([0.0, 2.0]), 1.0) == pytest.approx(0.5)

    def test_sorting_path_equals_pair_enumeration(self):
        rng = np.random.default_rng(0)
        for n in [2, 3, 17, 500]:
            samples = rng.standard_normal(n) * rng.uniform(0.5, 3)
            obs = rng.standard_normal()
            assert crps(samples, obs) == pytest.approx(
                brute_force_crps(samples, obs), abs=1e-10
            )

    def test_matches_closed_form_gaussian(self):
        rng = np.random.default_rng(42)
        samples = rng.standard_normal(100_000)
        assert gaussian_crps(0.0) == pytest.approx(0.2337, abs=1e-4)
        assert crps(samples, 0.0) == pytest.approx(gaussian_crps(0.0), abs=0.003)

    def test_nonnegative_and_zero_iff_degenerate(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            samples = rng.standard_normal(rng.integers(2, 40))
            obs = rng.standard_normal()
            value = crps(samples, obs)
            assert value >= 0.0
            if not np.all(samples == obs):
                assert value > 0.0

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        samples = rng.standard_normal(20)
        obs = rng.standard_normal()
        shuffled = rng.permutation(samples)
        assert crps(samples, obs) == pytest.approx(crps(shuffled, obs), abs=1e-12)

    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            crps(np.array([1.0]), 0.0)


class TestCrpsSum:
    def test_single_series_reduces_to_crps(self):
        rng = np.random.default_rng(2)
        samples = rng.standard_normal((50, 4, 1))
        truth = rng.standard_normal((4, 1))
        raw = crps_sum(samples, truth, normalize=False)
        per_step = [crps(samples[:, t, 0], truth[t, 0]) for t in range(4)]
        assert raw == pytest.approx(np.mean(per_step), abs=1e-12)

    def test_perfect_degenerate_forecast(self):
        truth = np.arange(6.0).reshape(3, 2) + 1.0
        samples = np.repeat(truth[None], 5, axis=0)
        assert crps_sum(samples, truth) == pytest.approx(0.0, abs=1e-12)

    def test_matches_independent_reimplementation(self):
        rng = np.random.default_rng(3)
        samples = rng.standard_normal((40, 3, 5)) + 2.0
        truth = rng.standard_normal((3, 5)) + 2.0
        # independent script: sum series, per-step brute-force crps
        summed_s = samples.sum(axis=2)
        summed_t = truth.sum(axis=1)
        steps = [brute_force_crps(summed_s[:, t], summed_t[t]) for t in range(3)]
        expected_norm = np.sum(steps) / np.sum(np.abs(summed_t))
        assert crps_sum(samples, truth) == pytest.approx(expected_norm, abs=1e-10)
        assert crps_sum(samples, truth, normalize=False) == pytest.approx(
            np.mean(steps), abs=1e-10
        )

    def test_zero_truth_normalization_error(self):
        samples = np.random.default_rng(0).standard_normal((5, 2, 2))
        truth = np.zeros((2, 2))
        with pytest.raises(ValueError):
            crps_sum(samples, truth)


class TestQuantileLoss:
    def test_exact_quantile_zero_loss(self):
        truth = np.full((2, 2), 5.0)
        samples = np.repeat(truth[None], 8, axis=0)
        assert quantile_loss(samples, truth, 0.5) == pytest.approx(0.0)

    def test_overprediction_formula(self):
        # single pair: quantile 3, truth 1, rho 0.5 -> 2*(3-1)*0.5 = 2, /1
        samples = np.full((4, 1, 1), 3.0)
        truth = np.array([[1.0]])
        assert quantile_loss(samples, truth, 0.5) == pytest.approx(2.0)

    def test_underprediction_formula(self):
        # quantile 0, truth 1, rho 0.9 -> 2*(0-1)*(-0.9) = 1.8
        samples = np.zeros((4, 1, 1))
        truth = np.array([[1.0]])
        assert quantile_loss(samples, truth, 0.9) == pytest.approx(1.8)

    def test_zero_truth_sum_raises(self):
        samples = np.ones((4, 1, 2))
        truth = np.array([[1.0, -1.0]])
        with pytest.raises(ValueError):
            quantile_loss(samples, truth, 0.5)

    def test_rho_domain(self):
        samples = np.ones((4, 1, 1))
        truth = np.ones((1, 1))
        with pytest.raises(ValueError):
            quantile_loss(samples, truth, 1.0)


class TestEnergyScore:
    def test_identical_samples_equal_truth(self):
        truth = np.ones((3, 2))
        samples = np.repeat(truth[None], 2, axis=0)
        assert energy_score(samples, truth) == pytest.approx(0.0)

    def test_scalar_case_collapses_to_crps(self):
        rng = np.random.default_rng(5)
        samples = rng.standard_normal((64, 1, 1))
        truth = rng.standard_normal((1, 1))
        assert energy_score(samples, truth) == pytest.approx(
            crps(samples[:, 0, 0], truth[0, 0]), abs=1e-12
        )

    def test_matches_double_loop(self):
        rng = np.random.default_rng(6)
        n = 120
        samples = rng.standard_normal((n, 4, 3))
        truth = rng.standard_normal((4, 3))
        term_obs = np.mean(
            [np.linalg.norm(samples[i] - truth) for i in range(n)]
        )
        term_pair = np.mean(
            [
                np.linalg.norm(samples[i] - samples[j])
                for i in range(n)
                for j in range(n)
            ]
        )
        expected = term_obs - 0.5 * term_pair
        assert energy_score(samples, truth) == pytest.approx(expected, abs=1e-10)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(7)
        samples = rng.standard_normal((30, 2, 2))
        truth = rng.standard_normal((2, 2))
        shuffled = samples[rng.permutation(30)]
        assert energy_score(samples, truth) == pytest.approx(
            energy_score(shuffled, truth), abs=1e-12
        )


class TestRrmse:
    def test_perfect_forecast(self):
        truth = np.random.default_rng(0).standard_normal((4, 3))
        assert rrmse(truth, truth) == pytest.approx(0.0)

    def test_mean_forecast_scores_one(self):
        truth = np.random.default_rng(1).standard_normal((5, 2))
        constant = np.full_like(truth, truth.mean())
        assert rrmse(constant, truth) == pytest.approx(1.0)

    def test_matches_scripted_computation(self):
        rng = np.random.default_rng(2)
        truth = rng.standard_normal((6, 4))
        forecast = truth + 0.3 * rng.standard_normal((6, 4))
        num = np.sqrt(((truth - forecast) ** 2).sum())
        den = np.sqrt(((truth - truth.mean()) ** 2).sum())
        assert rrmse(forecast, truth) == pytest.approx(num / den, rel=1e-12)

    def test_constant_truth_raises(self):
        with pytest.raises(ValueError):
            rrmse(np.ones((2, 2)), np.ones((2, 2)))


class TestEvaluationReport:
    def make_report(self):
        rng = np.random.default_rng(8)
        results = []
        for k in range(3):
            forecast = ForecastSamples(
                samples=rng.standard_normal((30, 4, 2)) + 3.0,
                truth=rng.standard_normal((4, 2)) + 3.0,
                instance=f"origin-{k}",
            )
            results.append(evaluate_instance(forecast))
        return EvaluationReport.from_instances(
            results, n_samples=30, seed=8, config_hash="abc123"
        )

    def test_aggregate_is_arithmetic_mean(self):
        report = self.make_report()
        for key, value in report.aggregate.items():
            assert value == pytest.approx(
                np.mean([r[key] for r in report.per_instance])
            )

    def test_json_round_trip(self):
        report = self.make_report()
        loaded = EvaluationReport.from_json(report.to_json())
        assert loaded == report

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            ForecastSamples(
                samples=np.zeros((5, 3, 2)), truth=np.zeros((2, 3)), instance="x"
            )
