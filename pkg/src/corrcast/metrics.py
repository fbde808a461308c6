"""Sample-based scores for probabilistic forecasts.

CRPS (and its cross-series-sum variant), quantile risk, energy score and
RRMSE, with instance-level evaluation and a JSON-serializable report. All
estimators are the empirical all-pairs forms; CRPS pair terms are computed
in O(n log n) from order statistics.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

DEFAULT_QUANTILES = (0.5, 0.9)


def _pairwise_mean_abs_sorted(samples: np.ndarray) -> np.ndarray:
    """mean_{i,j} |x_i - x_j| over all n^2 ordered pairs, along axis 0."""
    n = samples.shape[0]
    ordered = np.sort(samples, axis=0)
    weights = 2.0 * np.arange(n) - n + 1.0
    weighted = np.tensordot(weights, ordered, axes=(0, 0))
    return 2.0 * weighted / (n * n)


def crps_grid(samples: np.ndarray, obs: np.ndarray) -> np.ndarray:
    """Empirical CRPS mean|Z - z| - 0.5 mean|Z - Z'| along the sample axis."""
    samples = np.asarray(samples, dtype=float)
    obs = np.asarray(obs, dtype=float)
    if samples.shape[0] < 2:
        raise ValueError("CRPS needs at least 2 samples")
    term_obs = np.mean(np.abs(samples - obs), axis=0)
    return term_obs - 0.5 * _pairwise_mean_abs_sorted(samples)


def crps(samples: np.ndarray, obs: float) -> float:
    """CRPS of a scalar observation against a sample vector."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 1:
        raise ValueError("crps expects a 1-D sample vector")
    return float(crps_grid(samples, float(obs)))


def crps_sum(
    samples: np.ndarray, truth: np.ndarray, normalize: bool = True
) -> float:
    """CRPS of the cross-series sums, averaged over the horizon.

    Both forecasts and ground truth are summed over series first; the
    normalized mode divides the summed per-step CRPS by sum_t |sum_i z_it|.
    """
    samples, truth = _check_sample_shapes(samples, truth)
    summed_samples = samples.sum(axis=2)
    summed_truth = truth.sum(axis=1)
    per_step = crps_grid(summed_samples, summed_truth)
    if not normalize:
        return float(per_step.mean())
    denom = float(np.sum(np.abs(summed_truth)))
    if denom == 0.0:
        raise ValueError("cannot normalize crps_sum: summed truth is zero")
    return float(per_step.sum() / denom)


def quantile_loss(samples: np.ndarray, truth: np.ndarray, rho: float) -> float:
    """Normalized rho-risk 2(q - z)((1-rho) I[q>z] - rho I[q<=z]) / sum z.

    The rho-quantile is the empirical quantile with linear interpolation
    between order statistics.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must be inside (0, 1)")
    samples, truth = _check_sample_shapes(samples, truth)
    quants = np.quantile(samples, rho, axis=0)
    losses = 2.0 * (quants - truth) * ((quants > truth) * (1.0 - rho) - (quants <= truth) * rho)
    denom = float(truth.sum())
    if denom == 0.0:
        raise ValueError("cannot normalize quantile loss: truth sums to zero")
    return float(losses.sum() / denom)


def energy_score(samples: np.ndarray, truth: np.ndarray) -> float:
    """mean ||Z - z||_F - 0.5 mean_{i,j} ||Z_i - Z_j||_F over all n^2 pairs.

    Trajectories are compared under the Frobenius norm over the whole
    (horizon x series) block.
    """
    samples, truth = _check_sample_shapes(samples, truth)
    n = samples.shape[0]
    flat = samples.reshape(n, -1)
    target = truth.ravel()
    term_obs = float(np.mean(np.linalg.norm(flat - target, axis=1)))
    pair_total = 0.0
    chunk = max(1, 8_388_608 // max(flat.shape[1] * n, 1))
    for lo in range(0, n, chunk):
        diff = flat[lo:lo + chunk, None, :] - flat[None, :, :]
        pair_total += float(np.sqrt(np.sum(diff**2, axis=2)).sum())
    return term_obs - 0.5 * pair_total / (n * n)


def rrmse(mean_forecast: np.ndarray, truth: np.ndarray) -> float:
    """Point-forecast error relative to the instance-mean predictor.

    sqrt(sum_t ||z_t - zhat_t||^2) / sqrt(sum_t ||z_t - zbar||^2) with zbar
    the scalar mean of the whole forecast instance.
    """
    mean_forecast = np.asarray(mean_forecast, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if mean_forecast.shape != truth.shape:
        raise ValueError("forecast and truth shapes differ")
    baseline = truth - truth.mean()
    denom = float(np.sqrt(np.sum(baseline**2)))
    if denom == 0.0:
        raise ValueError("rrmse undefined for constant truth")
    return float(np.sqrt(np.sum((truth - mean_forecast) ** 2)) / denom)


def _check_sample_shapes(samples, truth):
    samples = np.asarray(samples, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if samples.ndim != 3:
        raise ValueError("samples must have shape (n, horizon, series)")
    if truth.shape != samples.shape[1:]:
        raise ValueError(
            f"truth shape {truth.shape} does not match samples {samples.shape[1:]}"
        )
    if samples.shape[0] < 2:
        raise ValueError("need at least 2 samples")
    return samples, truth


# ---------------------------------------------------------------------------
# instance evaluation and reporting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ForecastSamples:
    """Sampled trajectories for one forecast instance plus its ground truth."""

    samples: np.ndarray   # (n, horizon, series)
    truth: np.ndarray     # (horizon, series)
    instance: str

    def __post_init__(self):
        samples, truth = _check_sample_shapes(self.samples, self.truth)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "truth", truth)


def evaluate_instance(
    forecast: ForecastSamples, quantiles=DEFAULT_QUANTILES
) -> dict[str, float]:
    """All metrics of one forecast instance."""
    samples, truth = forecast.samples, forecast.truth
    out = {
        "crps": float(crps_grid(samples, truth).mean()),
        "crps_sum": crps_sum(samples, truth),
        "energy_score": energy_score(samples, truth),
        "rrmse": rrmse(samples.mean(axis=0), truth),
    }
    for rho in quantiles:
        out[f"quantile_risk_{rho:g}"] = quantile_loss(samples, truth, rho)
    return out


@dataclass
class EvaluationReport:
    """Per-instance metric values plus their arithmetic-mean aggregate."""

    aggregate: dict[str, float]
    per_instance: list[dict[str, float]] = field(default_factory=list)
    n_samples: int = 0
    seed: int = 0
    config_hash: str = ""

    @classmethod
    def from_instances(
        cls,
        results: list[dict[str, float]],
        n_samples: int,
        seed: int,
        config_hash: str = "",
    ) -> "EvaluationReport":
        if not results:
            raise ValueError("need at least one forecast instance")
        keys = results[0].keys()
        aggregate = {
            key: float(np.mean([r[key] for r in results])) for key in keys
        }
        return cls(
            aggregate=aggregate,
            per_instance=results,
            n_samples=n_samples,
            seed=seed,
            config_hash=config_hash,
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvaluationReport":
        return cls(**json.loads(text))
