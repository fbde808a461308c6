"""Structured batch covariance for cross-correlated Gaussian errors.

The covariance of a stacked window of D error vectors (B series each) is kept
in factored form

    Sigma = blkdiag(L_1..L_D) (C x I_R) blkdiag(L_1..L_D)^T + diag(d),

i.e. low-rank-plus-diagonal contemporaneous blocks tied together by a D x D
temporal correlation matrix C acting on R latent processes. All operations
(solve, log-determinant, NLL, gradients, sampling) work on the factors via
the Woodbury identity and the matrix determinant lemma; the dense D*B x D*B
matrix is never formed here (see ``corrcast.oracle`` for dense references).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .errors import SingularCovarianceError

# Jitter ladder for Cholesky retries on nearly singular matrices.
CHOLESKY_JITTERS = (0.0, 1e-10, 1e-8, 1e-6)

PSD_EIG_TOL = -1e-10

LOG_2PI = float(np.log(2.0 * np.pi))


def jittered_cholesky(mat: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor, retrying with diagonal jitter 1e-10/1e-8/1e-6.

    Raises SingularCovarianceError if the matrix is not positive definite
    even after the largest jitter.
    """
    eye = np.eye(mat.shape[0])
    for jitter in CHOLESKY_JITTERS:
        try:
            return cholesky(mat + jitter * eye, lower=True)
        except np.linalg.LinAlgError:
            continue
    raise SingularCovarianceError(
        f"Cholesky of {name} failed after jitter up to {CHOLESKY_JITTERS[-1]:g}"
    )


@dataclass(frozen=True)
class TemporalCorrelation:
    """D x D correlation matrix of the latent temporal processes.

    Must be symmetric with unit diagonal and positive semi-definite
    (eigenvalues >= -1e-10).
    """

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", mat)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError(f"correlation matrix must be square, got {mat.shape}")
        if not np.allclose(mat, mat.T, atol=1e-12):
            raise ValueError("correlation matrix must be symmetric")
        if not np.allclose(np.diag(mat), 1.0, atol=1e-12):
            raise ValueError("correlation matrix must have unit diagonal")
        if np.linalg.eigvalsh(mat).min() < PSD_EIG_TOL:
            raise ValueError("correlation matrix is not positive semi-definite")

    @property
    def window(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, window: int) -> "TemporalCorrelation":
        return cls(np.eye(window))


@dataclass(frozen=True)
class BatchCovariance:
    """Factored covariance of a D-step, B-series error window.

    factors: one (B, R) contemporaneous factor per window step, oldest first.
    diag:    strictly positive noise variances, length D*B, step-major.
    corr:    temporal correlation of the R latent processes across steps.
    """

    factors: tuple[np.ndarray, ...]
    diag: np.ndarray
    corr: TemporalCorrelation

    def __post_init__(self):
        factors = tuple(np.asarray(f, dtype=float) for f in self.factors)
        diag = np.asarray(self.diag, dtype=float)
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "diag", diag)
        if not factors:
            raise ValueError("need at least one factor matrix")
        b, r = factors[0].shape
        if any(f.shape != (b, r) for f in factors):
            raise ValueError("all factor matrices must share the same (B, R) shape")
        if self.corr.window != len(factors):
            raise ValueError(
                f"correlation window {self.corr.window} != number of factors {len(factors)}"
            )
        if diag.shape != (len(factors) * b,):
            raise ValueError(
                f"diag must have length D*B = {len(factors) * b}, got {diag.shape}"
            )
        if np.any(diag <= 0.0):
            raise ValueError("diag entries must be strictly positive")

    @property
    def window(self) -> int:
        return len(self.factors)

    @property
    def n_series(self) -> int:
        return self.factors[0].shape[0]

    @property
    def rank(self) -> int:
        return self.factors[0].shape[1]

    @property
    def dim(self) -> int:
        return self.window * self.n_series

    def diag_blocks(self) -> list[np.ndarray]:
        """Per-step views of the noise variances, each of length B."""
        b = self.n_series
        return [self.diag[i * b:(i + 1) * b] for i in range(self.window)]


class StructuredFactors:
    """One-shot factorization shared by solve/logdet/NLL/gradients.

    Performs exactly one Cholesky of C (D x D) and one of the capacitance
    matrix (DR x DR); everything else is diagonal or blockwise, so the cost
    never grows faster than linearly in B.
    """

    def __init__(self, cov: BatchCovariance):
        self.cov = cov
        d_steps = cov.diag_blocks()
        # E^{-1} A, kept blockwise: (B, R) per step.
        self.scaled_factors = [
            f / d[:, None] for f, d in zip(cov.factors, d_steps)
        ]
        # A^T E^{-1} A, block diagonal with R x R blocks.
        self.factor_gram = [
            f.T @ sf for f, sf in zip(cov.factors, self.scaled_factors)
        ]
        self.chol_corr = jittered_cholesky(cov.corr.matrix, "temporal correlation")
        corr_inv = cho_solve((self.chol_corr, True), np.eye(cov.window))
        cap = np.kron(corr_inv, np.eye(cov.rank))
        r = cov.rank
        for i, gram in enumerate(self.factor_gram):
            cap[i * r:(i + 1) * r, i * r:(i + 1) * r] += gram
        self.capacitance = cap
        self.chol_cap = jittered_cholesky(cap, "capacitance matrix")

    @cached_property
    def capacitance_inv(self) -> np.ndarray:
        return cho_solve((self.chol_cap, True), np.eye(self.capacitance.shape[0]))

    def _lift(self, v: np.ndarray) -> np.ndarray:
        """A^T (v / d): map a length-D*B vector (or stack) to latent DR space."""
        cov = self.cov
        b, r = cov.n_series, cov.rank
        u = v / (self.cov.diag if v.ndim == 1 else self.cov.diag[:, None])
        out = np.empty((cov.window * r,) + v.shape[1:])
        for i, f in enumerate(cov.factors):
            out[i * r:(i + 1) * r] = f.T @ u[i * b:(i + 1) * b]
        return out

    def _spread(self, y: np.ndarray) -> np.ndarray:
        """A y: map a length-D*R latent vector (or stack) back to D*B space."""
        cov = self.cov
        b, r = cov.n_series, cov.rank
        out = np.empty((cov.window * b,) + y.shape[1:])
        for i, f in enumerate(cov.factors):
            out[i * b:(i + 1) * b] = f @ y[i * r:(i + 1) * r]
        return out

    def solve(self, v: np.ndarray) -> np.ndarray:
        """Sigma^{-1} v via Woodbury; v may be a vector or a (D*B, k) stack."""
        v = np.asarray(v, dtype=float)
        d = self.cov.diag if v.ndim == 1 else self.cov.diag[:, None]
        w = self._lift(v)
        y = cho_solve((self.chol_cap, True), w)
        return v / d - self._spread(y) / d

    def logdet(self) -> float:
        """ln|Sigma| from the determinant lemma: capacitance + C + diagonal."""
        return float(
            2.0 * np.sum(np.log(np.diag(self.chol_cap)))
            + 2.0 * self.cov.rank * np.sum(np.log(np.diag(self.chol_corr)))
            + np.sum(np.log(self.cov.diag))
        )

    def mahalanobis(self, residual: np.ndarray) -> float:
        """residual^T Sigma^{-1} residual without forming Sigma^{-1}."""
        residual = np.asarray(residual, dtype=float)
        u2 = float(residual @ (residual / self.cov.diag))
        k = solve_triangular(self.chol_cap, self._lift(residual), lower=True)
        return u2 - float(k @ k)

    def nll(self, residual: np.ndarray) -> float:
        return 0.5 * (self.logdet() + self.mahalanobis(residual) + self.cov.dim * LOG_2PI)

    def sigma_inv_diag(self) -> np.ndarray:
        """diag(Sigma^{-1}), blockwise: 1/d - rowwise quadratic in E^{-1}A."""
        cov = self.cov
        r = cov.rank
        cap_inv = self.capacitance_inv
        parts = []
        for i, (sf, d) in enumerate(zip(self.scaled_factors, cov.diag_blocks())):
            block = cap_inv[i * r:(i + 1) * r, i * r:(i + 1) * r]
            parts.append(1.0 / d - np.einsum("br,rs,bs->b", sf, block, sf))
        return np.concatenate(parts)


def structured_solve(cov: BatchCovariance, v: np.ndarray) -> np.ndarray:
    """Solve Sigma x = v using the matrix inversion lemma (no dense Sigma)."""
    return StructuredFactors(cov).solve(v)


def structured_logdet(cov: BatchCovariance) -> float:
    """ln|Sigma| via the matrix determinant lemma (no dense Sigma)."""
    return StructuredFactors(cov).logdet()


def batch_nll(cov: BatchCovariance, residual: np.ndarray) -> float:
    """Gaussian negative log likelihood of a stacked residual window.

    0.5 * (ln|Sigma| + residual^T Sigma^{-1} residual + D*B*ln(2*pi)),
    assembled from the structured solve/logdet. With C = I this equals the
    sum of the D independent per-step Gaussian NLLs.
    """
    residual = np.asarray(residual, dtype=float)
    if residual.shape != (cov.dim,):
        raise ValueError(f"residual must have shape ({cov.dim},), got {residual.shape}")
    return StructuredFactors(cov).nll(residual)


@dataclass(frozen=True)
class NllGradients:
    """Value and adjoints of batch_nll with respect to the factored inputs.

    wrt_residual is the gradient in the residual (so the gradient in the
    mean vector is its negation); wrt_factors matches cov.factors blockwise.
    """

    value: float
    wrt_residual: np.ndarray
    wrt_diag: np.ndarray
    wrt_factors: tuple[np.ndarray, ...]
    wrt_corr: np.ndarray


def nll_gradients(cov: BatchCovariance, residual: np.ndarray) -> NllGradients:
    """Analytic adjoints of batch_nll through the Woodbury form.

    Uses dNLL/dSigma = 0.5 (Sigma^{-1} - p p^T) with p = Sigma^{-1} residual,
    chained onto diag, factors and C; all intermediates are D*B x D*R or
    smaller, so no dense D*B x D*B matrix is formed.
    """
    residual = np.asarray(residual, dtype=float)
    fac = StructuredFactors(cov)
    d_count, b, r = cov.window, cov.n_series, cov.rank

    p = fac.solve(residual)
    value = 0.5 * (fac.logdet() + float(residual @ p) + cov.dim * LOG_2PI)

    grad_diag = 0.5 * (fac.sigma_inv_diag() - p * p)

    # Sigma^{-1} A = E^{-1}A - E^{-1}A Cap^{-1} (A^T E^{-1} A), assembled dense
    # in D*B x D*R (same footprint as the factors themselves).
    cap_inv = fac.capacitance_inv
    b0 = np.zeros((d_count * b, d_count * r))
    gram = np.zeros((d_count * r, d_count * r))
    for i in range(d_count):
        b0[i * b:(i + 1) * b, i * r:(i + 1) * r] = fac.scaled_factors[i]
        gram[i * r:(i + 1) * r, i * r:(i + 1) * r] = fac.factor_gram[i]
    sig_inv_a = b0 - (b0 @ cap_inv) @ gram

    v = np.concatenate([f.T @ p[i * b:(i + 1) * b] for i, f in enumerate(cov.factors)])
    corr_kron = np.kron(cov.corr.matrix, np.eye(r))
    grad_a = (sig_inv_a - np.outer(p, v)) @ corr_kron
    wrt_factors = tuple(
        grad_a[i * b:(i + 1) * b, i * r:(i + 1) * r] for i in range(d_count)
    )

    # A^T Sigma^{-1} A = gram - gram Cap^{-1} gram, then trace out the R-fold
    # Kronecker blocks to land on the D x D correlation.
    a_sig_a = gram - gram @ cap_inv @ gram
    grad_kron = 0.5 * (a_sig_a - np.outer(v, v))
    grad_corr = np.empty((d_count, d_count))
    for i in range(d_count):
        for j in range(d_count):
            grad_corr[i, j] = np.trace(grad_kron[i * r:(i + 1) * r, j * r:(j + 1) * r])

    return NllGradients(
        value=value,
        wrt_residual=p,
        wrt_diag=grad_diag,
        wrt_factors=wrt_factors,
        wrt_corr=grad_corr,
    )


def sample(
    cov: BatchCovariance,
    mean: np.ndarray,
    n_samples: int,
    seed: int | np.random.Generator,
) -> np.ndarray:
    """Draw exact samples mean + A r + eps with r ~ N(0, C x I_R).

    Only the D x D correlation is Cholesky-factored; each latent process row
    is drawn with covariance C and the diagonal noise is added per entry.
    Returns an (n_samples, D*B) array, deterministic for a fixed seed.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    mean = np.asarray(mean, dtype=float)
    if mean.shape != (cov.dim,):
        raise ValueError(f"mean must have shape ({cov.dim},), got {mean.shape}")
    rng = np.random.default_rng(seed)
    d_count, b, r = cov.window, cov.n_series, cov.rank

    chol_corr = jittered_cholesky(cov.corr.matrix, "temporal correlation")
    latent = rng.standard_normal((n_samples, r, d_count)) @ chol_corr.T
    noise = rng.standard_normal((n_samples, cov.dim)) * np.sqrt(cov.diag)

    out = np.empty((n_samples, cov.dim))
    for i, f in enumerate(cov.factors):
        out[:, i * b:(i + 1) * b] = latent[:, :, i] @ f.T
    return out + noise + mean
