"""Dense reference computations for small instances.

Everything here materializes the full D*B x D*B covariance and therefore has
O(D^3 B^3) cost. It exists to cross-check the structured implementations and
to benchmark against them; production paths must not import this module.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .covariance import LOG_2PI, BatchCovariance


def assemble_dense(cov: BatchCovariance) -> np.ndarray:
    """Explicit Sigma with blocks (i, j) = C_ij L_i L_j^T (+ diag on i == j)."""
    d_count, b = cov.window, cov.n_series
    corr = cov.corr.matrix
    dense = np.zeros((cov.dim, cov.dim))
    for i in range(d_count):
        for j in range(d_count):
            dense[i * b:(i + 1) * b, j * b:(j + 1) * b] = (
                corr[i, j] * (cov.factors[i] @ cov.factors[j].T)
            )
    dense[np.diag_indices_from(dense)] += cov.diag
    return dense


def dense_solve(cov: BatchCovariance, v: np.ndarray) -> np.ndarray:
    return cho_solve(cho_factor(assemble_dense(cov), lower=True), np.asarray(v, float))


def dense_logdet(cov: BatchCovariance) -> float:
    low, _ = cho_factor(assemble_dense(cov), lower=True)
    return float(2.0 * np.sum(np.log(np.diag(low))))


def dense_nll(cov: BatchCovariance, residual: np.ndarray) -> float:
    residual = np.asarray(residual, dtype=float)
    factor = cho_factor(assemble_dense(cov), lower=True)
    logdet = float(2.0 * np.sum(np.log(np.diag(factor[0]))))
    mahal = float(residual @ cho_solve(factor, residual))
    return 0.5 * (logdet + mahal + cov.dim * LOG_2PI)


def independent_steps_nll(cov: BatchCovariance, residual: np.ndarray) -> float:
    """Sum of per-step B-dim Gaussian NLLs, ignoring cross-step correlation.

    This is the loss a temporally-independent model would use; batch_nll with
    C = I must reproduce it exactly.
    """
    residual = np.asarray(residual, dtype=float)
    b = cov.n_series
    total = 0.0
    for i, (factor, d) in enumerate(zip(cov.factors, cov.diag_blocks())):
        step_cov = factor @ factor.T + np.diag(d)
        low, _ = cho_factor(step_cov, lower=True)
        eta = residual[i * b:(i + 1) * b]
        mahal = float(eta @ cho_solve((low, True), eta))
        logdet = float(2.0 * np.sum(np.log(np.diag(low))))
        total += 0.5 * (logdet + mahal + b * LOG_2PI)
    return total


def dense_conditional(
    cov: BatchCovariance, observed: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Partitioned-Gaussian conditional of the last step given all earlier ones.

    Returns (mean, covariance) of the final B-block conditioned on the stacked
    observed residuals, computed by the textbook Schur-complement formulas on
    the dense matrix.
    """
    observed = np.asarray(observed, dtype=float)
    b = cov.n_series
    split = cov.dim - b
    if observed.shape != (split,):
        raise ValueError(f"observed must have shape ({split},), got {observed.shape}")
    dense = assemble_dense(cov)
    sig_obs = dense[:split, :split]
    sig_cross = dense[split:, :split]
    sig_last = dense[split:, split:]
    solved = cho_solve(cho_factor(sig_obs, lower=True), sig_cross.T)
    mean = solved.T @ observed
    conditional_cov = sig_last - sig_cross @ solved
    return mean, conditional_cov
