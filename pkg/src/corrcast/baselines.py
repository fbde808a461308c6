"""VAR(1) baseline fitted by ordinary least squares."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covariance import jittered_cholesky


@dataclass(frozen=True)
class VarModel:
    """z_t = intercept + coefficients z_{t-1} + eps, eps ~ N(0, noise_cov)."""

    intercept: np.ndarray     # (N,)
    coefficients: np.ndarray  # (N, N)
    noise_cov: np.ndarray     # (N, N), symmetric PSD


def fit_var1(data: np.ndarray) -> VarModel:
    """OLS fit of a lag-1 vector autoregression.

    Residual covariance uses the degrees-of-freedom correction
    T_eff - (N + 1) with T_eff = T - 1 regression rows.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ValueError("data must be (T, N)")
    n_steps, n_series = data.shape
    if n_steps < n_series + 2:
        raise ValueError(f"need at least N + 2 = {n_series + 2} steps, got {n_steps}")
    regressors = np.column_stack([np.ones(n_steps - 1), data[:-1]])
    targets = data[1:]
    coef, _, rank, _ = np.linalg.lstsq(regressors, targets, rcond=None)
    if rank < n_series + 1:
        raise ValueError(
            f"regressor matrix is rank deficient ({rank} < {n_series + 1})"
        )
    residuals = targets - regressors @ coef
    dof = (n_steps - 1) - (n_series + 1)
    if dof < 1:
        raise ValueError("not enough observations for the residual covariance")
    noise_cov = residuals.T @ residuals / dof
    return VarModel(
        intercept=coef[0],
        coefficients=coef[1:].T,
        noise_cov=noise_cov,
    )


def var_forecast(
    model: VarModel,
    last_obs: np.ndarray,
    horizon: int,
    n_paths: int,
    seed: int,
) -> np.ndarray:
    """Iterated sampling z_{t+1} = c + A z_t + eps; (n_paths, horizon, N)."""
    if horizon < 1 or n_paths < 1:
        raise ValueError("horizon and n_paths must be >= 1")
    last_obs = np.asarray(last_obs, dtype=float)
    n_series = last_obs.shape[0]
    rng = np.random.default_rng(seed)
    if np.allclose(model.noise_cov, 0.0):
        chol = np.zeros((n_series, n_series))
    else:
        chol = jittered_cholesky(model.noise_cov, "VAR residual covariance")
    out = np.empty((n_paths, horizon, n_series))
    for path in range(n_paths):
        current = last_obs
        for q in range(horizon):
            noise = chol @ rng.standard_normal(n_series)
            current = model.intercept + model.coefficients @ current + noise
            out[path, q] = current
    return out
