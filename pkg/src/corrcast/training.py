"""Gradient-descent training of the forecaster on the batch-window NLL.

Gradients are hand-derived adjoints: the covariance-side adjoints come from
``corrcast.covariance.nll_gradients`` and are chained through the heads, the
kernel mixture and the cell unroll (backprop through time). The whole chain
is checked against central finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .covariance import BatchCovariance, StructuredFactors, nll_gradients
from .errors import NumericalError
from .model import (
    ForecastModel,
    Unroll,
    build_inputs,
    correlation_from_logits,
    emit_params,
    sample_series_subset,
    unroll,
)


@dataclass
class Window:
    """One training slice: teacher-forced inputs and the D target steps."""

    inputs: np.ndarray   # (P + D, B, F)
    targets: np.ndarray  # (D, B)


def window_covariance(model: ForecastModel, run: Unroll):
    """Distribution of the last D window steps given an unrolled trajectory."""
    d_window = model.config.corr_window
    head_states = run.hidden[-d_window:]
    step = emit_params(model, head_states)
    logits_last = None if step.logits is None else step.logits[-1]
    corr, weights = correlation_from_logits(model, logits_last)
    cov = BatchCovariance(
        factors=tuple(step.factors),
        diag=step.noise.ravel(),
        corr=corr,
    )
    return step, cov, weights


def window_loss(model: ForecastModel, window: Window) -> float:
    """Forward-only batch NLL of one window (used by the FD checks)."""
    run = unroll(model, window.inputs)
    step, cov, _ = window_covariance(model, run)
    residual = (window.targets - step.mean).ravel()
    return StructuredFactors(cov).nll(residual)


def window_loss_and_grads(
    model: ForecastModel, window: Window
) -> tuple[float, dict[str, np.ndarray]]:
    """Batch NLL of one window and its gradient for every parameter."""
    cfg = model.config
    params = model.params
    run = unroll(model, window.inputs)
    steps_total, n_series, _ = window.inputs.shape
    d_window = cfg.corr_window
    head_start = steps_total - d_window

    step, cov, weights = window_covariance(model, run)
    residual = (window.targets - step.mean).ravel()
    cov_grads = nll_gradients(cov, residual)
    loss = cov_grads.value

    grads = {k: np.zeros_like(v) for k, v in params.items()}
    head_states = run.hidden[head_start:]

    grad_mean = -cov_grads.wrt_residual.reshape(d_window, n_series)
    grad_noise_pre = (
        cov_grads.wrt_diag.reshape(d_window, n_series) * expit(step.noise_pre)
    )
    grad_factors = np.stack(cov_grads.wrt_factors)

    grads["mean_w"] += np.einsum("tb,tbh->h", grad_mean, head_states)
    grads["noise_w"] += np.einsum("tb,tbh->h", grad_noise_pre, head_states)
    grads["factor_w"] += np.einsum("tbr,tbh->rh", grad_factors, head_states)

    grad_hidden = np.zeros_like(run.hidden)
    grad_hidden[head_start:] += (
        grad_mean[:, :, None] * params["mean_w"]
        + grad_noise_pre[:, :, None] * params["noise_w"]
        + grad_factors @ params["factor_w"]
    )

    if not cfg.identity_corr:
        # The mixture pins the diagonal of C to 1, so only off-diagonal
        # entries carry gradient into the weights.
        grad_corr_off = cov_grads.wrt_corr.copy()
        np.fill_diagonal(grad_corr_off, 0.0)
        bank = model.kernel_bank
        grad_weights = np.einsum("ij,mij->m", grad_corr_off, bank.matrices)
        w = weights.weights
        grad_logits = w * (grad_weights - float(w @ grad_weights))
        pooled = head_states[-1].mean(axis=0)
        grads["corr_w"] += np.outer(grad_logits, pooled)
        grads["corr_b"] += grad_logits
        grad_hidden[-1] += (params["corr_w"].T @ grad_logits) / n_series

        if cfg.learn_lengthscales:
            idx = np.arange(d_window, dtype=float)
            lag_sq = (idx[:, None] - idx[None, :]) ** 2
            for m, scale in enumerate(bank.lengthscales):
                dk_dl = bank.matrices[m] * (2.0 * lag_sq / scale**3)
                grad_scale = w[m] * float(np.sum(grad_corr_off * dk_dl))
                grads["lengthscale_raw"][m] += grad_scale * expit(
                    params["lengthscale_raw"][m]
                )

    # Backprop through time over the full conditioning + prediction window.
    hsize = cfg.hidden_size
    dh_next = np.zeros((n_series, hsize))
    dc_next = np.zeros((n_series, hsize))
    cell_w = params["cell_w"]
    for t in range(steps_total - 1, -1, -1):
        cache = run.caches[t]
        dh = grad_hidden[t] + dh_next
        d_output = dh * cache.cell_tanh
        dc = dc_next + dh * cache.output * (1.0 - cache.cell_tanh**2)
        d_forget = dc * cache.cell_prev
        d_update = dc * cache.candidate
        d_candidate = dc * cache.update
        dc_next = dc * cache.forget
        d_pre = np.concatenate(
            [
                d_forget * cache.forget * (1.0 - cache.forget),
                d_update * cache.update * (1.0 - cache.update),
                d_candidate * (1.0 - cache.candidate**2),
                d_output * cache.output * (1.0 - cache.output),
            ],
            axis=1,
        )
        grads["cell_w"] += d_pre.T @ cache.inputs_concat
        grads["cell_b"] += d_pre.sum(axis=0)
        dh_next = (d_pre @ cell_w)[:, :hsize]

    return loss, grads


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

class Adam:
    """Plain Adam (beta 0.9/0.999, eps 1e-8); lr is mutable for decay."""

    def __init__(self, params, learning_rate, beta1=0.9, beta2=0.999, eps=1e-8):
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.first = {k: np.zeros_like(v) for k, v in params.items()}
        self.second = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for key, grad in grads.items():
            m = self.first[key] = b1 * self.first[key] + (1 - b1) * grad
            v = self.second[key] = b2 * self.second[key] + (1 - b2) * grad**2
            m_hat = m / (1 - b1**self.t)
            v_hat = v / (1 - b2**self.t)
            params[key] -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Global-norm clipping; returns the pre-clip norm."""
    total = float(np.sqrt(sum(float(np.sum(g**2)) for g in grads.values())))
    if total > max_norm > 0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


def _diagnose_nan(model: ForecastModel, window: Window) -> str:
    run = unroll(model, window.inputs)
    step, cov, _ = window_covariance(model, run)
    residual = (window.targets - step.mean).ravel()
    fac = StructuredFactors(cov)
    logdet = fac.logdet()
    mahal = fac.mahalanobis(residual)
    return f"logdet={logdet!r} mahalanobis={mahal!r}"


def training_step(
    model: ForecastModel,
    windows: list[Window],
    optimizer: Adam,
    clip_norm: float = 10.0,
) -> float:
    """One gradient update on the mean NLL of the given windows."""
    loss_total = 0.0
    grads_total = {k: np.zeros_like(v) for k, v in model.params.items()}
    for window in windows:
        loss, grads = window_loss_and_grads(model, window)
        if not np.isfinite(loss):
            raise NumericalError(
                f"NaN/inf loss in training step: {_diagnose_nan(model, window)}"
            )
        loss_total += loss
        for key, grad in grads.items():
            grads_total[key] += grad
    scale = 1.0 / len(windows)
    loss_mean = loss_total * scale
    for grad in grads_total.values():
        grad *= scale
    clip_gradients(grads_total, clip_norm)
    optimizer.step(model.params, grads_total)
    model.refresh_kernel_bank()
    return loss_mean


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    learning_rate: float = 1e-2
    max_updates: int = 10_000
    windows_per_update: int = 16
    updates_per_epoch: int = 50
    patience_epochs: int = 10
    plateau_updates: int = 500
    clip_norm: float = 10.0
    batch_series: int | None = None
    n_val_windows: int = 32
    seed: int = 0


@dataclass
class TrainingTrace:
    update_losses: list[float] = field(default_factory=list)
    val_nlls: list[float] = field(default_factory=list)
    n_updates: int = 0
    best_val: float = float("inf")
    final_lr: float = 0.0
    stop_reason: str = ""


class Trainer:
    """Windowed training with validation-based early stop and lr decay.

    Data sampling is fully determined by (seed, update index), so two models
    trained with the same config and seed see identical series subsets and
    window positions regardless of their correlation mode.
    """

    def __init__(
        self,
        model: ForecastModel,
        values: np.ndarray,
        covariates: np.ndarray,
        train_end: int,
        val_end: int,
        config: TrainConfig,
    ):
        cfg = model.config
        self.model = model
        self.values = values
        self.covariates = covariates
        self.config = config
        self.window_len = cfg.cond_range + cfg.corr_window
        self.n_series = values.shape[1]
        self.batch_series = config.batch_series or min(self.n_series, 20)
        if self.batch_series > self.n_series:
            raise ValueError("batch_series exceeds the number of series")
        # Earliest window start is 1 (lag input); training windows must end
        # inside the training span, validation windows inside the val span.
        self.train_starts = (1, train_end - self.window_len)
        if self.train_starts[1] < self.train_starts[0]:
            raise ValueError("training span shorter than one window")
        val_lo = max(1, train_end - cfg.cond_range)
        val_hi = val_end - self.window_len
        n_val = min(config.n_val_windows, max(val_hi - val_lo + 1, 0))
        self.val_starts = (
            np.unique(np.linspace(val_lo, val_hi, n_val).astype(int))
            if n_val > 0
            else np.array([], dtype=int)
        )

    def _make_window(self, start: int, series_idx: np.ndarray) -> Window:
        cfg = self.model.config
        inputs = build_inputs(
            self.values, self.covariates, series_idx, start, self.window_len
        )
        target_lo = start + cfg.cond_range
        targets = self.values[target_lo:target_lo + cfg.corr_window][:, series_idx]
        return Window(inputs=inputs, targets=targets)

    def sample_windows(self, update_index: int) -> list[Window]:
        rng = np.random.default_rng([self.config.seed, update_index])
        lo, hi = self.train_starts
        windows = []
        for _ in range(self.config.windows_per_update):
            subset = sample_series_subset(
                self.n_series, self.batch_series, rng.integers(2**32)
            )
            start = int(rng.integers(lo, hi + 1))
            windows.append(self._make_window(start, subset))
        return windows

    def validation_nll(self) -> float:
        if self.val_starts.size == 0:
            return float("nan")
        total = 0.0
        for i, start in enumerate(self.val_starts):
            subset = sample_series_subset(
                self.n_series, self.batch_series, seed=[self.config.seed, 7919, i]
            )
            total += window_loss(self.model, self._make_window(int(start), subset))
        return total / self.val_starts.size

    def run(self) -> TrainingTrace:
        cfg = self.config
        optimizer = Adam(self.model.params, cfg.learning_rate)
        trace = TrainingTrace(final_lr=cfg.learning_rate)
        best_params = {k: v.copy() for k, v in self.model.params.items()}
        epochs_without_improvement = 0
        updates_without_improvement = 0

        while trace.n_updates < cfg.max_updates:
            epoch_updates = min(
                cfg.updates_per_epoch, cfg.max_updates - trace.n_updates
            )
            for _ in range(epoch_updates):
                windows = self.sample_windows(trace.n_updates)
                loss = training_step(self.model, windows, optimizer, cfg.clip_norm)
                trace.update_losses.append(loss)
                trace.n_updates += 1

            val = self.validation_nll()
            trace.val_nlls.append(val)
            if val < trace.best_val:
                trace.best_val = val
                best_params = {k: v.copy() for k, v in self.model.params.items()}
                epochs_without_improvement = 0
                updates_without_improvement = 0
            else:
                epochs_without_improvement += 1
                updates_without_improvement += epoch_updates
                if updates_without_improvement >= cfg.plateau_updates:
                    optimizer.learning_rate *= 0.5
                    trace.final_lr = optimizer.learning_rate
                    updates_without_improvement = 0
                if epochs_without_improvement >= cfg.patience_epochs:
                    trace.stop_reason = "early-stop"
                    break
        else:
            trace.stop_reason = "max-updates"

        self.model.params = best_params
        self.model.refresh_kernel_bank()
        return trace
