"""Builders for the D x D temporal correlation matrix.

Two routes: a weighted bank of squared-exponential kernels plus an identity
component (weights on the simplex keep the result a valid correlation), or
the Toeplitz autocorrelation matrix of a stationary AR(p) process obtained
from the Yule-Walker recursions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covariance import PSD_EIG_TOL, TemporalCorrelation


@dataclass(frozen=True)
class KernelBank:
    """Precomputed kernel matrices: one SE kernel per lengthscale + identity.

    matrices has shape (M, D, D) where M = len(lengthscales) + 1 and the last
    slice is the identity; each slice is symmetric, unit-diagonal and PSD.
    """

    lengthscales: tuple[float, ...]
    window: int
    matrices: np.ndarray

    @property
    def size(self) -> int:
        return self.matrices.shape[0]


@dataclass(frozen=True)
class MixWeights:
    """Simplex weights over the kernel bank components."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if w.ndim != 1:
            raise ValueError("weights must be a vector")
        if np.any(w < 0.0) or abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")


def se_kernel_matrix(lengthscale: float, window: int) -> np.ndarray:
    """K_ij = exp(-(i-j)^2 / l^2) on the index grid 0..window-1."""
    if lengthscale <= 0.0:
        raise ValueError(f"lengthscale must be positive, got {lengthscale}")
    idx = np.arange(window, dtype=float)
    sq = (idx[:, None] - idx[None, :]) ** 2
    return np.exp(-sq / lengthscale**2)


def build_kernel_bank(lengthscales, window: int) -> KernelBank:
    """SE kernels for each lengthscale, with the identity appended last."""
    if window < 1:
        raise ValueError("window must be >= 1")
    scales = tuple(float(l) for l in lengthscales)
    matrices = np.stack(
        [se_kernel_matrix(l, window) for l in scales] + [np.eye(window)]
    )
    return KernelBank(lengthscales=scales, window=window, matrices=matrices)


def default_lengthscales(n_kernels: int, start: float = 1.0) -> tuple[float, ...]:
    """Arithmetic lengthscale grid start, start+1, ... of size n_kernels - 1.

    The bank appends an identity component, so n_kernels counts it too;
    start 0.5 and 1.0 reproduce the two standard grids.
    """
    if n_kernels < 2:
        raise ValueError("need at least one SE kernel plus the identity")
    return tuple(start + k for k in range(n_kernels - 1))


def softmax_weights(logits) -> MixWeights:
    """Max-shifted softmax onto the simplex; total on any finite input."""
    logits = np.asarray(logits, dtype=float)
    shifted = np.exp(logits - logits.max())
    return MixWeights(shifted / shifted.sum())


def mix(bank: KernelBank, weights: MixWeights) -> TemporalCorrelation:
    """Convex combination sum_m w_m K_m; unit diagonal is restored exactly."""
    if weights.weights.shape != (bank.size,):
        raise ValueError(
            f"expected {bank.size} weights, got {weights.weights.shape}"
        )
    combined = np.einsum("m,mij->ij", weights.weights, bank.matrices)
    # Convexity guarantees a unit diagonal up to rounding; pin it exactly.
    np.fill_diagonal(combined, 1.0)
    return TemporalCorrelation(combined)


def ar_autocorrelations(coefficients, lags: int) -> np.ndarray:
    """Autocorrelations rho_0..rho_{lags-1} of a stationary AR(p) process.

    rho_1..rho_p solve the Yule-Walker system; later lags follow the
    recursion rho_k = sum_i phi_i rho_{k-i}. Raises on non-stationary
    coefficients (companion-matrix spectral radius >= 1).
    """
    phi = np.asarray(coefficients, dtype=float)
    if phi.ndim != 1 or phi.size == 0:
        raise ValueError("coefficients must be a non-empty vector")
    p = phi.size

    companion = np.zeros((p, p))
    companion[0, :] = phi
    if p > 1:
        companion[1:, :-1] = np.eye(p - 1)
    if np.abs(np.linalg.eigvals(companion)).max() >= 1.0:
        raise ValueError(f"AR coefficients {phi} define a non-stationary process")

    # Yule-Walker: rho_j = sum_i phi_i rho_{|j-i|}, j = 1..p, with rho_0 = 1.
    system = np.eye(p)
    rhs = phi.copy()
    for j in range(1, p + 1):
        for i in range(1, p + 1):
            lag = abs(j - i)
            if lag > 0:
                system[j - 1, lag - 1] -= phi[i - 1]
    rho_head = np.linalg.solve(system, rhs)

    rho = np.empty(max(lags, p + 1))
    rho[0] = 1.0
    rho[1:p + 1] = rho_head
    for k in range(p + 1, rho.size):
        rho[k] = phi @ rho[k - p:k][::-1]
    return rho[:lags]


@dataclass(frozen=True)
class ArCorrelation:
    """AR(p) coefficients with their derived window autocorrelations."""

    coefficients: tuple[float, ...]
    window: int
    autocorrelations: np.ndarray


def yule_walker_correlation(coefficients, window: int) -> TemporalCorrelation:
    """Toeplitz correlation built from AR(p) autocorrelations.

    Rejects coefficient sets whose Toeplitz matrix is not PSD rather than
    projecting it, so downstream likelihoods stay exact.
    """
    rho = ar_autocorrelations(coefficients, window)
    idx = np.arange(window)
    toeplitz = rho[np.abs(idx[:, None] - idx[None, :])]
    if np.linalg.eigvalsh(toeplitz).min() < PSD_EIG_TOL:
        raise ValueError(
            f"AR autocorrelations {rho} give a non-PSD Toeplitz matrix"
        )
    return TemporalCorrelation(toeplitz)


def ar_correlation(coefficients, window: int) -> ArCorrelation:
    """Bundle coefficients with the autocorrelations used for the window."""
    corr = yule_walker_correlation(coefficients, window)
    return ArCorrelation(
        coefficients=tuple(float(c) for c in coefficients),
        window=window,
        autocorrelations=corr.matrix[0].copy(),
    )
