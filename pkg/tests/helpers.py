"""Shared builders for randomized test instances."""

from __future__ import annotations

import numpy as np

from corrcast.covariance import BatchCovariance, TemporalCorrelation


def random_correlation(rng: np.random.Generator, window: int) -> TemporalCorrelation:
    """Random SPD matrix rescaled to unit diagonal (a valid correlation)."""
    raw = rng.standard_normal((window, window))
    spd = raw @ raw.T + window * np.eye(window)
    scale = np.sqrt(np.diag(spd))
    return TemporalCorrelation(spd / np.outer(scale, scale))


def random_batch_covariance(
    rng: np.random.Generator,
    window: int,
    n_series: int,
    rank: int,
) -> BatchCovariance:
    return BatchCovariance(
        factors=tuple(rng.standard_normal((n_series, rank)) for _ in range(window)),
        diag=rng.uniform(0.5, 2.0, window * n_series),
        corr=random_correlation(rng, window),
    )


def random_dims(rng: np.random.Generator, max_d=6, max_b=8, max_r=3):
    return (
        int(rng.integers(1, max_d + 1)),
        int(rng.integers(1, max_b + 1)),
        int(rng.integers(1, max_r + 1)),
    )
