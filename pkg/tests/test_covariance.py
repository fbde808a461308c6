"""Structured covariance operations against dense oracles."""

import numpy as np
import pytest
from helpers import random_batch_covariance, random_correlation, random_dims

from corrcast import oracle
from corrcast.covariance import (
    BatchCovariance,
    TemporalCorrelation,
    batch_nll,
    jittered_cholesky,
    nll_gradients,
    sample,
    structured_logdet,
    structured_solve,
)
from corrcast.errors import SingularCovarianceError


def scalar_cov(variance_factor=1.0, noise=1.0):
    return BatchCovariance(
        factors=(np.array([[variance_factor]]),),
        diag=np.array([noise]),
        corr=TemporalCorrelation.identity(1),
    )


class TestAssembleDense:
    def test_scalar(self):
        np.testing.assert_allclose(oracle.assemble_dense(scalar_cov()), [[2.0]])

    def test_two_steps_identity_corr(self):
        cov = BatchCovariance(
            factors=(np.array([[1.0]]), np.array([[1.0]])),
            diag=np.array([1.0, 1.0]),
            corr=TemporalCorrelation.identity(2),
        )
        np.testing.assert_allclose(
            oracle.assemble_dense(cov), [[2.0, 0.0], [0.0, 2.0]]
        )

    def test_two_steps_half_corr(self):
        cov = BatchCovariance(
            factors=(np.array([[1.0]]), np.array([[1.0]])),
            diag=np.array([1.0, 1.0]),
            corr=TemporalCorrelation(np.array([[1.0, 0.5], [0.5, 1.0]])),
        )
        np.testing.assert_allclose(
            oracle.assemble_dense(cov), [[2.0, 0.5], [0.5, 2.0]]
        )

    def test_cross_block_formula(self):
        """Off-diagonal block (i, j) must equal C_ij * L_i L_j^T exactly."""
        rng = np.random.default_rng(7)
        cov = random_batch_covariance(rng, window=4, n_series=3, rank=2)
        dense = oracle.assemble_dense(cov)
        b = cov.n_series
        for i in range(4):
            for j in range(4):
                if i == j:
                    continue
                block = dense[i * b:(i + 1) * b, j * b:(j + 1) * b]
                expected = cov.corr.matrix[i, j] * (cov.factors[i] @ cov.factors[j].T)
                np.testing.assert_allclose(block, expected, rtol=1e-14, atol=1e-16)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            BatchCovariance(
                factors=(np.ones((2, 1)), np.ones((3, 1))),
                diag=np.ones(5),
                corr=TemporalCorrelation.identity(2),
            )


class TestStructuredSolve:
    def test_identity_case(self):
        cov = BatchCovariance(
            factors=tuple(np.zeros((3, 2)) for _ in range(2)),
            diag=np.ones(6),
            corr=random_correlation(np.random.default_rng(0), 2),
        )
        v = np.arange(6.0)
        np.testing.assert_allclose(structured_solve(cov, v), v)

    def test_scalar(self):
        np.testing.assert_allclose(
            structured_solve(scalar_cov(), np.array([4.0])), [2.0]
        )

    def test_matches_dense_cholesky(self):
        rng = np.random.default_rng(42)
        cov = random_batch_covariance(rng, window=4, n_series=6, rank=2)
        v = rng.standard_normal(cov.dim)
        expected = oracle.dense_solve(cov, v)
        np.testing.assert_allclose(structured_solve(cov, v), expected, rtol=1e-10)

    def test_matrix_rhs(self):
        rng = np.random.default_rng(3)
        cov = random_batch_covariance(rng, window=3, n_series=4, rank=2)
        rhs = rng.standard_normal((cov.dim, 5))
        expected = oracle.dense_solve(cov, rhs)
        np.testing.assert_allclose(structured_solve(cov, rhs), expected, rtol=1e-9)


class TestStructuredLogdet:
    def test_identity_case(self):
        cov = BatchCovariance(
            factors=tuple(np.zeros((4, 1)) for _ in range(3)),
            diag=np.ones(12),
            corr=random_correlation(np.random.default_rng(1), 3),
        )
        assert structured_logdet(cov) == pytest.approx(0.0, abs=1e-12)

    def test_scalar(self):
        assert structured_logdet(scalar_cov()) == pytest.approx(np.log(2.0))

    def test_matches_dense(self):
        rng = np.random.default_rng(5)
        cov = random_batch_covariance(rng, window=3, n_series=5, rank=2)
        assert structured_logdet(cov) == pytest.approx(
            oracle.dense_logdet(cov), abs=1e-9
        )


class TestBatchNll:
    def test_zero_residual_identity(self):
        cov = BatchCovariance(
            factors=tuple(np.zeros((2, 1)) for _ in range(3)),
            diag=np.ones(6),
            corr=TemporalCorrelation.identity(3),
        )
        expected = 0.5 * 6 * np.log(2 * np.pi)
        assert batch_nll(cov, np.zeros(6)) == pytest.approx(expected)

    def test_scalar_gaussian(self):
        expected = 0.5 * (np.log(2.0) + 2.0 + np.log(2 * np.pi))
        assert batch_nll(scalar_cov(), np.array([2.0])) == pytest.approx(expected)

    def test_identity_corr_collapses_to_per_step_sum(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            d, b, r = random_dims(rng)
            cov = random_batch_covariance(rng, d, b, r)
            cov = BatchCovariance(cov.factors, cov.diag, TemporalCorrelation.identity(d))
            residual = rng.standard_normal(cov.dim)
            assert batch_nll(cov, residual) == pytest.approx(
                oracle.independent_steps_nll(cov, residual), abs=1e-9
            )

    def test_matches_dense_over_random_instances(self):
        rng = np.random.default_rng(99)
        for _ in range(50):
            d, b, r = random_dims(rng)
            cov = random_batch_covariance(rng, d, b, r)
            residual = rng.standard_normal(cov.dim)
            expected = oracle.dense_nll(cov, residual)
            assert batch_nll(cov, residual) == pytest.approx(expected, rel=1e-10)

    def test_shape_check(self):
        with pytest.raises(ValueError):
            batch_nll(scalar_cov(), np.zeros(3))


class TestNllGradients:
    def test_matches_central_differences(self):
        rng = np.random.default_rng(8)
        cov = random_batch_covariance(rng, window=3, n_series=4, rank=2)
        residual = rng.standard_normal(cov.dim)
        grads = nll_gradients(cov, residual)
        eps = 1e-6

        def nll_at(factors, diag, corr, res):
            return batch_nll(BatchCovariance(factors, diag, corr), res)

        # residual direction
        for idx in [0, 5, 11]:
            bump = np.zeros(cov.dim)
            bump[idx] = eps
            fd = (
                nll_at(cov.factors, cov.diag, cov.corr, residual + bump)
                - nll_at(cov.factors, cov.diag, cov.corr, residual - bump)
            ) / (2 * eps)
            assert grads.wrt_residual[idx] == pytest.approx(fd, rel=1e-5)

        # diagonal entries
        for idx in [0, 7]:
            hi, lo = cov.diag.copy(), cov.diag.copy()
            hi[idx] += eps
            lo[idx] -= eps
            fd = (
                nll_at(cov.factors, hi, cov.corr, residual)
                - nll_at(cov.factors, lo, cov.corr, residual)
            ) / (2 * eps)
            assert grads.wrt_diag[idx] == pytest.approx(fd, rel=1e-5)

        # factor entries
        for step, row, col in [(0, 1, 0), (2, 3, 1)]:
            hi = [f.copy() for f in cov.factors]
            lo = [f.copy() for f in cov.factors]
            hi[step][row, col] += eps
            lo[step][row, col] -= eps
            fd = (
                nll_at(tuple(hi), cov.diag, cov.corr, residual)
                - nll_at(tuple(lo), cov.diag, cov.corr, residual)
            ) / (2 * eps)
            assert grads.wrt_factors[step][row, col] == pytest.approx(fd, rel=1e-5)

        # symmetric correlation pair (i, j) + (j, i)
        for i, j in [(0, 1), (1, 2)]:
            hi, lo = cov.corr.matrix.copy(), cov.corr.matrix.copy()
            hi[i, j] += eps
            hi[j, i] += eps
            lo[i, j] -= eps
            lo[j, i] -= eps
            fd = (
                nll_at(cov.factors, cov.diag, TemporalCorrelation(hi), residual)
                - nll_at(cov.factors, cov.diag, TemporalCorrelation(lo), residual)
            ) / (2 * eps)
            paired = grads.wrt_corr[i, j] + grads.wrt_corr[j, i]
            assert paired == pytest.approx(fd, rel=1e-5)

    def test_value_matches_batch_nll(self):
        rng = np.random.default_rng(13)
        cov = random_batch_covariance(rng, window=2, n_series=3, rank=1)
        residual = rng.standard_normal(cov.dim)
        assert nll_gradients(cov, residual).value == pytest.approx(
            batch_nll(cov, residual), rel=1e-12
        )


class TestSample:
    def test_deterministic_for_seed(self):
        rng = np.random.default_rng(2)
        cov = random_batch_covariance(rng, window=2, n_series=3, rank=1)
        mean = rng.standard_normal(cov.dim)
        a = sample(cov, mean, 4, seed=123)
        b = sample(cov, mean, 4, seed=123)
        np.testing.assert_array_equal(a, b)

    def test_unit_variance_noise_only(self):
        """With zero factors and unit diag, per-coordinate variance is ~1."""
        cov = BatchCovariance(
            factors=tuple(np.zeros((2, 1)) for _ in range(2)),
            diag=np.ones(4),
            corr=TemporalCorrelation.identity(2),
        )
        draws = sample(cov, np.zeros(4), 100_000, seed=0)
        variances = draws.var(axis=0)
        # MC std of a variance estimate is sqrt(2/n) for unit-variance normals.
        tol = 4 * np.sqrt(2.0 / 100_000)
        assert np.all(np.abs(variances - 1.0) < tol)

    def test_lag_covariance_matches_dense(self):
        cov = BatchCovariance(
            factors=(np.array([[1.0]]), np.array([[1.0]])),
            diag=np.array([1.0, 1.0]),
            corr=TemporalCorrelation(np.array([[1.0, 0.5], [0.5, 1.0]])),
        )
        n = 100_000
        draws = sample(cov, np.zeros(2), n, seed=7)
        emp = np.cov(draws.T)
        dense = oracle.assemble_dense(cov)
        # 4x the MC standard error of each covariance entry.
        mc_std = np.sqrt(
            (np.outer(np.diag(dense), np.diag(dense)) + dense**2) / n
        )
        assert np.all(np.abs(emp - dense) < 4 * mc_std)

    def test_mean_shift(self):
        cov = scalar_cov()
        mean = np.array([10.0])
        draws = sample(cov, mean, 50_000, seed=4)
        assert draws.mean() == pytest.approx(10.0, abs=4 * np.sqrt(2.0 / 50_000))

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            sample(scalar_cov(), np.zeros(1), 0, seed=0)
        with pytest.raises(ValueError):
            sample(scalar_cov(), np.zeros(2), 1, seed=0)


class TestValidation:
    def test_diag_must_be_positive(self):
        with pytest.raises(ValueError):
            BatchCovariance(
                factors=(np.ones((1, 1)),),
                diag=np.array([0.0]),
                corr=TemporalCorrelation.identity(1),
            )

    def test_correlation_unit_diagonal(self):
        with pytest.raises(ValueError):
            TemporalCorrelation(np.array([[2.0, 0.0], [0.0, 1.0]]))

    def test_correlation_symmetry(self):
        with pytest.raises(ValueError):
            TemporalCorrelation(np.array([[1.0, 0.3], [0.1, 1.0]]))

    def test_correlation_psd(self):
        with pytest.raises(ValueError):
            TemporalCorrelation(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_jittered_cholesky_failure(self):
        with pytest.raises(SingularCovarianceError):
            jittered_cholesky(np.array([[1.0, 0.0], [0.0, -5.0]]))

    def test_jittered_cholesky_repairs_psd(self):
        # Rank-deficient PSD matrix: plain Cholesky fails, jitter fixes it.
        mat = np.ones((3, 3))
        low = jittered_cholesky(mat)
        np.testing.assert_allclose(low @ low.T, mat, atol=1e-5)


class TestScalingBehaviour:
    def test_cost_grows_mildly_in_series_count(self):
        """Structured NLL must beat the dense path by 10x at B = 200."""
        import time

        rng = np.random.default_rng(0)
        cov = random_batch_covariance(rng, window=4, n_series=200, rank=2)
        residual = rng.standard_normal(cov.dim)

        batch_nll(cov, residual)  # warm up
        start = time.perf_counter()
        for _ in range(5):
            batch_nll(cov, residual)
        structured_time = (time.perf_counter() - start) / 5

        oracle.dense_nll(cov, residual)
        start = time.perf_counter()
        for _ in range(5):
            oracle.dense_nll(cov, residual)
        dense_time = (time.perf_counter() - start) / 5

        assert dense_time > 10 * structured_time
