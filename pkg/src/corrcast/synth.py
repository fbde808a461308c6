"""Synthetic data with a known cross-correlated error structure.

Each series is a seasonal sinusoid plus a mild linear trend; the errors are
built exactly like the model assumes them: a low-rank loading of R latent
temporal processes plus independent noise. The latent processes can be iid,
AR(1), or squared-exponential correlated, so the ground-truth correlation
is controlled by the spec.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .covariance import jittered_cholesky
from .data import Dataset, write_csv

ERROR_KINDS = ("iid", "ar1", "se")

SIDECAR_SCHEMA = 1


@dataclass(frozen=True)
class SyntheticGeneratorSpec:
    n_series: int = 8
    n_steps: int = 2000
    error_kind: str = "ar1"
    ar_coeff: float = 0.7
    se_lengthscale: float = 2.0
    latent_rank: int = 2
    latent_scale: float = 1.0
    noise_floor: float = 0.3
    season_period: int = 24
    season_amplitude: float = 1.0
    trend_scale: float = 0.2

    def __post_init__(self):
        if self.error_kind not in ERROR_KINDS:
            raise ValueError(f"error_kind must be one of {ERROR_KINDS}")
        if self.error_kind == "ar1" and not -1.0 < self.ar_coeff < 1.0:
            raise ValueError("ar_coeff must lie in (-1, 1)")
        if self.noise_floor <= 0.0:
            raise ValueError("noise_floor must be positive")
        if self.error_kind == "se" and self.n_steps > 5000:
            raise ValueError("se error generation is dense; keep n_steps <= 5000")


def _latent_paths(spec: SyntheticGeneratorSpec, rng: np.random.Generator):
    """(T, R) latent processes with unit marginal variance."""
    shape = (spec.n_steps, spec.latent_rank)
    if spec.error_kind == "iid":
        return rng.standard_normal(shape)
    if spec.error_kind == "ar1":
        rho = spec.ar_coeff
        innovations = rng.standard_normal(shape)
        paths = np.empty(shape)
        paths[0] = innovations[0]
        scale = np.sqrt(1.0 - rho**2)
        for t in range(1, spec.n_steps):
            paths[t] = rho * paths[t - 1] + scale * innovations[t]
        return paths
    # squared-exponential: dense Toeplitz Cholesky (guarded by the size cap)
    lags = np.arange(spec.n_steps, dtype=float)
    corr = np.exp(-((lags[:, None] - lags[None, :]) ** 2) / spec.se_lengthscale**2)
    chol = jittered_cholesky(corr, "SE latent correlation")
    return chol @ rng.standard_normal(shape)


def simulate(spec: SyntheticGeneratorSpec, seed: int):
    """Return (Dataset, truth) where truth records every generator parameter."""
    rng = np.random.default_rng(seed)
    t = np.arange(spec.n_steps)

    amplitude = spec.season_amplitude * rng.uniform(0.5, 1.5, spec.n_series)
    phase = rng.uniform(0.0, 2.0 * np.pi, spec.n_series)
    level = rng.normal(0.0, 0.3, spec.n_series)
    slope = spec.trend_scale * rng.uniform(-1.0, 1.0, spec.n_series)
    seasonal = amplitude * np.sin(
        2.0 * np.pi * t[:, None] / spec.season_period + phase
    )
    mean = seasonal + level + slope * (t[:, None] / spec.n_steps)

    loadings = rng.normal(
        0.0, spec.latent_scale / np.sqrt(spec.latent_rank),
        (spec.n_series, spec.latent_rank),
    )
    latent = _latent_paths(spec, rng)
    noise = spec.noise_floor * rng.standard_normal((spec.n_steps, spec.n_series))
    errors = latent @ loadings.T + noise

    truth = {
        "amplitude": amplitude.tolist(),
        "phase": phase.tolist(),
        "level": level.tolist(),
        "slope": slope.tolist(),
        "loadings": loadings.tolist(),
        "error_kind": spec.error_kind,
        "ar_coeff": spec.ar_coeff,
        "se_lengthscale": spec.se_lengthscale,
        "noise_floor": spec.noise_floor,
    }
    return Dataset(values=mean + errors, index=t), truth


def generate(
    spec: SyntheticGeneratorSpec, seed: int, csv_path, sidecar_path=None
) -> Dataset:
    """Write the dataset CSV and a JSON sidecar with the true parameters."""
    dataset, truth = simulate(spec, seed)
    write_csv(dataset, csv_path)
    if sidecar_path is None:
        sidecar_path = Path(csv_path).with_suffix(".json")
    payload = {
        "schema": SIDECAR_SCHEMA,
        "seed": seed,
        "spec": asdict(spec),
        "truth": truth,
    }
    Path(sidecar_path).write_text(json.dumps(payload, sort_keys=True, indent=2))
    return dataset


def load_sidecar(path) -> dict:
    payload = json.loads(Path(path).read_text())
    if payload.get("schema") != SIDECAR_SCHEMA:
        raise ValueError(f"{path}: unsupported sidecar schema")
    return payload
