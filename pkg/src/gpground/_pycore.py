"""Pure-NumPy implementation of the per-segment objective kernel.

This is the fallback used when the compiled ``_core`` extension is not
available; both expose the same ``segment_term`` signature.
"""

import numpy as np
import scipy.linalg

from .kernels import factorize

LOG_2PI = float(np.log(2.0 * np.pi))


def _chol_inverse(chol):
    n = chol.shape[0]
    return scipy.linalg.cho_solve((chol, True), np.eye(n), check_finite=False)


def segment_term(r, z, rbar, lbar, theta, want_grad=True):
    """Log marginal likelihood of one segment and its gradient.

    Parameters
    ----------
    r, z : ndarray (n,)
        Candidate radii and (centered) heights.
    rbar, lbar : ndarray (nb,)
        Pseudo-input locations and their log length-scale targets.
    theta : sequence of 5 floats
        ``sigma_f, sigma_n, sigma_bar_f, sigma_bar_l, sigma_bar_n``.

    Returns
    -------
    value : float
    grad : ndarray (5,) or None
        Derivatives w.r.t. the five scalars in ``theta``.
    grad_lbar : ndarray (nb,) or None
    """
    sf, sn, sbf, sbl, sbn = (float(t) for t in theta)
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    rbar = np.asarray(rbar, dtype=float)
    lbar = np.asarray(lbar, dtype=float)
    n = r.size
    nb = rbar.size

    # latent process
    db = rbar[:, None] - rbar[None, :]
    db2 = db * db
    C = (sbf * sbf) * np.exp(-0.5 * db2 / (sbl * sbl))
    B = C.copy()
    B[np.diag_indices(nb)] += sbn * sbn
    LB, jit_b = factorize(B)
    # jitter is proportional to max(diag) = sbf^2 + sbn^2
    rel_b = jit_b / (sbf * sbf + sbn * sbn)
    beta = scipy.linalg.cho_solve((LB, True), lbar, check_finite=False)

    dx = r[:, None] - rbar[None, :]
    dx2 = dx * dx
    Kx = (sbf * sbf) * np.exp(-0.5 * dx2 / (sbl * sbl))
    u = Kx @ beta
    ell = np.exp(u)

    # observation process
    d = r[:, None] - r[None, :]
    d2 = d * d
    s = ell[:, None] ** 2 + ell[None, :] ** 2
    pref = np.sqrt(ell[:, None] * ell[None, :] / (0.5 * s))
    K = (sf * sf) * pref * np.exp(-d2 / s)
    A = K.copy()
    A[np.diag_indices(n)] += sn * sn
    LA, jit_a = factorize(A)
    rel_a = jit_a / (sf * sf + sn * sn)
    alpha = scipy.linalg.cho_solve((LA, True), z, check_finite=False)

    value = -0.5 * (
        float(z @ alpha)
        + 2.0 * float(np.sum(np.log(np.diag(LA))))
        + float(lbar @ beta)
        + 2.0 * float(np.sum(np.log(np.diag(LB))))
        + (n + nb) * LOG_2PI
    )
    if not want_grad:
        return value, None, None

    Ainv = _chol_inverse(LA)
    W = np.outer(alpha, alpha) - Ainv
    g = np.zeros(5)
    trW = float(np.trace(W))
    g[0] = float(np.sum(W * K)) / sf + rel_a * sf * trW
    g[1] = sn * trW * (1.0 + rel_a)

    # dK_ij / d ell_i, zero on the diagonal
    D = K * (0.5 / ell[:, None] - ell[:, None] / s + 2.0 * ell[:, None] * d2 / (s * s))
    g_ell = np.sum(W * D, axis=1)
    g_u = g_ell * ell

    Binv = _chol_inverse(LB)
    gamma = Binv @ (Kx.T @ g_u)

    # A-chain through u = Kx B^{-1} lbar, plus the latent log-likelihood
    dKx_f = 2.0 * Kx / sbf
    dKx_l = Kx * dx2 / sbl**3
    dB_f = 2.0 * C / sbf
    dB_l = C * db2 / sbl**3
    Wb = np.outer(beta, beta) - Binv
    # coefficient of d(jitter_b) in the latent terms
    jb = -float(gamma @ beta) + 0.5 * float(np.trace(Wb))
    g[2] = (g_u @ dKx_f @ beta - gamma @ dB_f @ beta
            + 0.5 * float(np.sum(Wb * dB_f)) + 2.0 * rel_b * sbf * jb)
    g[3] = (g_u @ dKx_l @ beta - gamma @ dB_l @ beta
            + 0.5 * float(np.sum(Wb * dB_l)))
    # dB/d sbn = 2 sbn I, dKx/d sbn = 0
    g[4] = 2.0 * sbn * jb * (1.0 + rel_b)
    grad_lbar = gamma - beta
    return value, g, grad_lbar
