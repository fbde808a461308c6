"""Recurrent base model: one LSTM cell and shared affine heads.

The cell is unrolled independently per series with shared weights; per step
each series' hidden state is mapped to a mean, a softplus noise variance and
a rank-R factor row, and the series-pooled hidden state is mapped to mixing
logits for the temporal correlation. Everything is plain numpy so the
training adjoints stay explicit and checkable.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .covariance import TemporalCorrelation
from .kernels import KernelBank, MixWeights, build_kernel_bank, mix, softmax_weights

CHECKPOINT_FORMAT = "corrcast-checkpoint"
CHECKPOINT_VERSION = 1


def softplus(x):
    return np.logaddexp(0.0, x)


def inverse_softplus(y):
    # log(e^y - 1), stable for the y >= ~1e-8 values we feed it
    return y + np.log1p(-np.exp(-y))


@dataclass(frozen=True)
class ModelConfig:
    """Shapes and fixed hyperparameters of the forecaster."""

    hidden_size: int
    rank: int
    n_kernels: int
    corr_window: int
    cond_range: int
    n_features: int
    lengthscales: tuple[float, ...]
    identity_corr: bool = False
    learn_lengthscales: bool = False
    d_floor: float = 1e-8

    def __post_init__(self):
        if not self.identity_corr and len(self.lengthscales) != self.n_kernels - 1:
            raise ValueError(
                f"need {self.n_kernels - 1} lengthscales, got {len(self.lengthscales)}"
            )


@dataclass
class ForecastModel:
    """Parameter container; all state transitions go through free functions."""

    config: ModelConfig
    params: dict[str, np.ndarray]
    kernel_bank: KernelBank | None = field(default=None, repr=False)

    def __post_init__(self):
        cfg = self.config
        if self.kernel_bank is None and not cfg.identity_corr:
            scales = (
                tuple(softplus(self.params["lengthscale_raw"]))
                if cfg.learn_lengthscales
                else cfg.lengthscales
            )
            object.__setattr__(
                self, "kernel_bank", build_kernel_bank(scales, cfg.corr_window)
            )

    def refresh_kernel_bank(self):
        """Rebuild the bank after a lengthscale parameter update."""
        if self.config.learn_lengthscales and not self.config.identity_corr:
            self.kernel_bank = build_kernel_bank(
                tuple(softplus(self.params["lengthscale_raw"])),
                self.config.corr_window,
            )


def init_model(config: ModelConfig, seed: int) -> ForecastModel:
    """All weights uniform in +-1/sqrt(H)."""
    rng = np.random.default_rng(seed)
    h, f = config.hidden_size, config.n_features
    bound = 1.0 / np.sqrt(h)

    def uniform(*shape):
        return rng.uniform(-bound, bound, shape)

    params = {
        "cell_w": uniform(4 * h, h + f),
        "cell_b": uniform(4 * h),
        "mean_w": uniform(h),
        "noise_w": uniform(h),
        "factor_w": uniform(config.rank, h),
    }
    if not config.identity_corr:
        params["corr_w"] = uniform(config.n_kernels, h)
        params["corr_b"] = uniform(config.n_kernels)
        if config.learn_lengthscales:
            params["lengthscale_raw"] = inverse_softplus(
                np.asarray(config.lengthscales, dtype=float)
            )
    return ForecastModel(config=config, params=params)


# ---------------------------------------------------------------------------
# cell
# ---------------------------------------------------------------------------

@dataclass
class StepCache:
    """Forward intermediates of one cell step, kept for backprop."""

    inputs_concat: np.ndarray   # [h_prev, y_t], (B, H+F)
    forget: np.ndarray
    update: np.ndarray
    candidate: np.ndarray
    output: np.ndarray
    cell_prev: np.ndarray
    cell_tanh: np.ndarray


def cell_step(params, x, h_prev, c_prev):
    """One LSTM step for all series at once; returns (h, c, cache)."""
    hsize = h_prev.shape[1]
    concat = np.concatenate([h_prev, x], axis=1)
    pre = concat @ params["cell_w"].T + params["cell_b"]
    forget = expit(pre[:, :hsize])
    update = expit(pre[:, hsize:2 * hsize])
    candidate = np.tanh(pre[:, 2 * hsize:3 * hsize])
    output = expit(pre[:, 3 * hsize:])
    c_new = forget * c_prev + update * candidate
    cell_tanh = np.tanh(c_new)
    h_new = output * cell_tanh
    cache = StepCache(concat, forget, update, candidate, output, c_prev, cell_tanh)
    return h_new, c_new, cache


@dataclass
class Unroll:
    """Hidden trajectory over a window plus per-step caches."""

    hidden: np.ndarray            # (T, B, H)
    caches: list[StepCache]
    final_hidden: np.ndarray      # (B, H)
    final_cell: np.ndarray        # (B, H)


def unroll(model: ForecastModel, inputs: np.ndarray, h0=None, c0=None) -> Unroll:
    """Run the cell over (T, B, F) inputs with teacher forcing.

    The trajectory is deterministic in the inputs and parameters; per-series
    rows are independent because the cell never mixes series.
    """
    steps, n_series, n_features = inputs.shape
    if n_features != model.config.n_features:
        raise ValueError(
            f"expected {model.config.n_features} input features, got {n_features}"
        )
    hsize = model.config.hidden_size
    h = np.zeros((n_series, hsize)) if h0 is None else h0
    c = np.zeros((n_series, hsize)) if c0 is None else c0
    hidden = np.empty((steps, n_series, hsize))
    caches = []
    for t in range(steps):
        h, c, cache = cell_step(model.params, inputs[t], h, c)
        hidden[t] = h
        caches.append(cache)
    return Unroll(hidden=hidden, caches=caches, final_hidden=h, final_cell=c)


# ---------------------------------------------------------------------------
# heads
# ---------------------------------------------------------------------------

@dataclass
class StepParams:
    """Per-step distribution parameters over a window of hidden states."""

    mean: np.ndarray        # (T, B)
    noise_pre: np.ndarray   # (T, B), pre-softplus
    noise: np.ndarray       # (T, B), softplus + floor
    factors: np.ndarray     # (T, B, R)
    logits: np.ndarray | None   # (T, M), series-pooled; None for identity corr


def emit_params(model: ForecastModel, hidden: np.ndarray) -> StepParams:
    """Map (T, B, H) hidden states through the shared heads."""
    p = model.params
    mean = hidden @ p["mean_w"]
    noise_pre = hidden @ p["noise_w"]
    noise = softplus(noise_pre) + model.config.d_floor
    factors = hidden @ p["factor_w"].T
    logits = None
    if not model.config.identity_corr:
        pooled = hidden.mean(axis=1)
        logits = pooled @ p["corr_w"].T + p["corr_b"]
    return StepParams(mean, noise_pre, noise, factors, logits)


def correlation_from_logits(
    model: ForecastModel, logits_last: np.ndarray | None
) -> tuple[TemporalCorrelation, MixWeights | None]:
    if model.config.identity_corr:
        return TemporalCorrelation.identity(model.config.corr_window), None
    weights = softmax_weights(logits_last)
    return mix(model.kernel_bank, weights), weights


# ---------------------------------------------------------------------------
# inputs
# ---------------------------------------------------------------------------

def build_inputs(
    values: np.ndarray,
    covariates: np.ndarray,
    series_idx: np.ndarray,
    start: int,
    length: int,
) -> np.ndarray:
    """Model inputs for steps start..start+length-1 of the selected series.

    Per series and step: the lag-1 series value, the shared time covariates,
    and a scalar series identifier. Requires start >= 1 for the lag.
    """
    if start < 1:
        raise ValueError("window must start at t >= 1 (needs a lag-1 value)")
    if start + length > values.shape[0]:
        raise ValueError("window runs past the end of the data")
    n_total = values.shape[1]
    series_idx = np.asarray(series_idx, dtype=int)
    lagged = values[start - 1:start + length - 1][:, series_idx]
    cov = np.repeat(covariates[start:start + length, None, :], len(series_idx), axis=1)
    scalar_ids = series_idx / max(n_total - 1, 1)
    ident = np.broadcast_to(
        scalar_ids[None, :, None], (length, len(series_idx), 1)
    ).astype(float)
    return np.concatenate([lagged[:, :, None], cov, ident], axis=2)


def n_input_features(n_covariates: int) -> int:
    return 1 + n_covariates + 1


def sample_series_subset(n_series: int, batch_size: int, seed) -> np.ndarray:
    """Uniform without-replacement subset, sorted, deterministic per seed."""
    if not 1 <= batch_size <= n_series:
        raise ValueError(f"need 1 <= batch size <= {n_series}, got {batch_size}")
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n_series, size=batch_size, replace=False))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(model: ForecastModel, path, extra: dict | None = None) -> None:
    """Self-describing JSON checkpoint of config + all parameter tensors."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "params": {k: v.tolist() for k, v in model.params.items()},
        "extra": extra or {},
    }
    Path(path).write_text(json.dumps(payload))


def load_checkpoint(path) -> tuple[ForecastModel, dict]:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    cfg_dict = payload["config"]
    cfg_dict["lengthscales"] = tuple(cfg_dict["lengthscales"])
    config = ModelConfig(**cfg_dict)
    params = {k: np.asarray(v, dtype=float) for k, v in payload["params"].items()}
    return ForecastModel(config=config, params=params), payload["extra"]
