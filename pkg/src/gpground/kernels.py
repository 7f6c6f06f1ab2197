"""Covariance functions for the two Gaussian processes.

``nonstat_cov`` is the input-dependent (Paciorek-type) kernel used for the
ground heights; ``se_cov`` is the stationary squared exponential used for the
latent log length-scale process.  Gram assembly adds noise plus a relative
jitter which is escalated until the matrix factorizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

__all__ = [
    "IllConditionedError",
    "NonStatKernelParams",
    "SEKernelParams",
    "GramMatrix",
    "JITTER_START",
    "JITTER_MAX",
    "nonstat_cov",
    "se_cov",
    "nonstat_matrix",
    "se_matrix",
    "gram",
    "gram_derivatives",
    "factorize",
]

JITTER_START = 1e-8
JITTER_MAX = 1e-4


class IllConditionedError(np.linalg.LinAlgError):
    """Raised when a Gram matrix cannot be factorized even with maximum jitter."""


@dataclass(frozen=True)
class NonStatKernelParams:
    signal_variance: float
    noise_variance: float
    lengthscales: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.signal_variance > 0:
            raise ValueError("signal_variance must be positive")
        if not self.noise_variance >= 0:
            raise ValueError("noise_variance must be nonnegative")
        if self.lengthscales is None:
            return
        ls = np.asarray(self.lengthscales, dtype=float)
        if ls.ndim != 1 or not np.all(ls > 0):
            raise ValueError("lengthscales must be a 1-d array of positive values")
        object.__setattr__(self, "lengthscales", ls)


@dataclass(frozen=True)
class SEKernelParams:
    signal_variance: float
    lengthscale: float
    noise_variance: float

    def __post_init__(self):
        if not (self.signal_variance > 0 and self.lengthscale > 0):
            raise ValueError("signal_variance and lengthscale must be positive")
        if not self.noise_variance >= 0:
            raise ValueError("noise_variance must be nonnegative")


@dataclass(frozen=True)
class GramMatrix:
    """A (possibly noisy) Gram matrix together with its Cholesky factor.

    ``chol`` is lower triangular with ``chol @ chol.T == values``; ``values``
    already includes the noise term and ``jitter`` on the diagonal.
    """

    values: np.ndarray
    jitter: float
    chol: np.ndarray | None = None

    def solve(self, b):
        return scipy.linalg.cho_solve((self.chol, True), b, check_finite=False)

    def logdet(self):
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))


def nonstat_cov(r_i, r_j, L_i, L_j, signal_variance):
    """Scalar (or broadcast) non-stationary covariance between two inputs."""
    L_i = np.asarray(L_i, dtype=float)
    L_j = np.asarray(L_j, dtype=float)
    if np.any(L_i <= 0) or np.any(L_j <= 0):
        raise ValueError("length-scales must be positive")
    s = L_i * L_i + L_j * L_j
    d = np.asarray(r_i, dtype=float) - np.asarray(r_j, dtype=float)
    pref = np.sqrt(L_i) * np.sqrt(L_j) / np.sqrt(0.5 * s)
    out = signal_variance * pref * np.exp(-d * d / s)
    return out if out.ndim else float(out)


def se_cov(rb_i, rb_j, params: SEKernelParams):
    d = np.asarray(rb_i, dtype=float) - np.asarray(rb_j, dtype=float)
    out = params.signal_variance * np.exp(-0.5 * d * d / params.lengthscale**2)
    return out if out.ndim else float(out)


def nonstat_matrix(r1, L1, r2, L2, signal_variance):
    """Cross-covariance matrix ``K[a, b] = k(r1[a], r2[b])``."""
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    return nonstat_cov(r1[:, None], r2[None, :], np.asarray(L1)[:, None],
                       np.asarray(L2)[None, :], signal_variance)


def se_matrix(r1, r2, params: SEKernelParams):
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    return se_cov(r1[:, None], r2[None, :], params)


def factorize(matrix, jitter_start=JITTER_START, jitter_max=JITTER_MAX):
    """Cholesky-factorize ``matrix + jitter*I`` with escalating relative jitter.

    Returns ``(chol, jitter)``.  The jitter starts at ``jitter_start * max(diag)``
    and grows by 10x until ``jitter_max * max(diag)`` is exceeded.
    """
    scale = float(np.max(np.diag(matrix))) if matrix.size else 1.0
    if not np.isfinite(scale) or scale <= 0:
        scale = 1.0
    rel = jitter_start
    eye = np.eye(matrix.shape[0])
    while rel <= jitter_max * (1 + 1e-9):
        jitter = rel * scale
        try:
            chol = np.linalg.cholesky(matrix + jitter * eye)
        except np.linalg.LinAlgError:
            rel *= 10.0
            continue
        if np.all(np.isfinite(chol)):
            return chol, jitter
        rel *= 10.0
    raise IllConditionedError("ill-conditioned")


def gram(locations, params, noisy=True):
    """Assemble the Gram matrix over ``locations``.

    ``params`` selects the kernel: :class:`NonStatKernelParams` (length-scales
    given per location) or :class:`SEKernelParams`.  With ``noisy`` the noise
    variance is added to the diagonal; jitter is always added and the result
    is factorized.
    """
    r = np.asarray(locations, dtype=float)
    if r.ndim != 1 or r.size == 0:
        raise ValueError("locations must be a nonempty 1-d array")
    if isinstance(params, NonStatKernelParams):
        if params.lengthscales is None or params.lengthscales.shape != r.shape:
            raise ValueError("one length-scale per location is required")
        K = nonstat_matrix(r, params.lengthscales, r, params.lengthscales,
                           params.signal_variance)
    elif isinstance(params, SEKernelParams):
        K = se_matrix(r, r, params)
    else:
        raise TypeError(f"unsupported kernel parameters {type(params).__name__}")
    K = 0.5 * (K + K.T)
    if noisy:
        K[np.diag_indices_from(K)] += params.noise_variance
    chol, jitter = factorize(K)
    K[np.diag_indices_from(K)] += jitter
    return GramMatrix(values=K, jitter=jitter, chol=chol)


def gram_derivatives(locations, params):
    """Analytic partial derivatives of the noisy Gram matrix.

    For the non-stationary kernel the list is
    ``[d/d sigma_f, d/d sigma_n, d/d L_0, ..., d/d L_{n-1}]``; for the SE
    kernel it is ``[d/d sigma_bar_f, d/d sigma_bar_l, d/d sigma_bar_n]``.
    Derivatives are taken with respect to standard deviations (not variances)
    and the lengthscale itself; jitter is treated as constant.
    """
    r = np.asarray(locations, dtype=float)
    n = r.size
    d = r[:, None] - r[None, :]
    if isinstance(params, NonStatKernelParams):
        L = params.lengthscales
        sf = np.sqrt(params.signal_variance)
        sn = np.sqrt(params.noise_variance)
        K = nonstat_matrix(r, L, r, L, params.signal_variance)
        out = [2.0 * K / sf, 2.0 * sn * np.eye(n)]
        s = L[:, None] ** 2 + L[None, :] ** 2
        # row-wise factor of dK_ij / dL_i
        D = K * (0.5 / L[:, None] - L[:, None] / s + 2.0 * L[:, None] * d * d / (s * s))
        for i in range(n):
            dK = np.zeros((n, n))
            dK[i, :] = D[i, :]
            dK[:, i] = D[i, :]
            dK[i, i] = 0.0
            out.append(dK)
        return out
    if isinstance(params, SEKernelParams):
        sf = np.sqrt(params.signal_variance)
        sl = params.lengthscale
        sn = np.sqrt(params.noise_variance)
        K = se_matrix(r, r, params)
        return [2.0 * K / sf, K * d * d / sl**3, 2.0 * sn * np.eye(n)]
    raise TypeError(f"unsupported kernel parameters {type(params).__name__}")
