# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-segment objective kernel.

Same contract as :func:`gpground._pycore.segment_term`.  Matrices are stored
C-contiguous and handed to LAPACK as their (identical, symmetric) Fortran
transpose, so the Cholesky factor lives in the C upper triangle.
"""

import numpy as np
from libc.math cimport exp, sqrt, log
from scipy.linalg.cython_lapack cimport dpotrf, dpotrs, dpotri

from .kernels import IllConditionedError, JITTER_START, JITTER_MAX

cdef double LOG_2PI = log(2.0 * 3.141592653589793)


cdef double _factor(double[:, ::1] M, double[:, ::1] out) except -1.0:
    """Factor ``M + jitter*I`` into ``out``; returns the jitter used."""
    cdef int n = <int>M.shape[0]
    cdef int info = 1
    cdef Py_ssize_t i, j
    cdef double scale = 0.0
    cdef double rel = JITTER_START
    cdef double rel_max = JITTER_MAX * (1.0 + 1e-9)
    cdef double jitter
    cdef char uplo = b'L'
    for i in range(n):
        if M[i, i] > scale:
            scale = M[i, i]
    if not scale > 0.0:
        scale = 1.0
    while rel <= rel_max:
        jitter = rel * scale
        for i in range(n):
            for j in range(n):
                out[i, j] = M[i, j]
            out[i, i] += jitter
        dpotrf(&uplo, &n, &out[0, 0], &n, &info)
        if info == 0:
            return jitter
        rel *= 10.0
    raise IllConditionedError("ill-conditioned")


cdef void _solve(double[:, ::1] fac, double[::1] b):
    cdef int n = <int>fac.shape[0]
    cdef int one = 1
    cdef int info = 0
    cdef char uplo = b'L'
    dpotrs(&uplo, &n, &one, &fac[0, 0], &n, &b[0], &n, &info)


cdef object _inverse(double[:, ::1] fac):
    cdef int n = <int>fac.shape[0]
    cdef int info = 0
    cdef char uplo = b'L'
    cdef Py_ssize_t i, j
    inv = np.array(fac, copy=True)
    cdef double[:, ::1] iv = inv
    dpotri(&uplo, &n, &iv[0, 0], &n, &info)
    # result sits in the C upper triangle
    for i in range(n):
        for j in range(i):
            iv[i, j] = iv[j, i]
    return inv


def segment_term(r_in, z_in, rbar_in, lbar_in, theta, bint want_grad=True):
    cdef double[::1] r = np.ascontiguousarray(r_in, dtype=np.float64)
    cdef double[::1] z = np.ascontiguousarray(z_in, dtype=np.float64)
    cdef double[::1] rbar = np.ascontiguousarray(rbar_in, dtype=np.float64)
    cdef double[::1] lbar = np.ascontiguousarray(lbar_in, dtype=np.float64)
    cdef double sf = float(theta[0])
    cdef double sn = float(theta[1])
    cdef double sbf = float(theta[2])
    cdef double sbl = float(theta[3])
    cdef double sbn = float(theta[4])
    cdef Py_ssize_t n = r.shape[0]
    cdef Py_ssize_t nb = rbar.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double d, d2, s, v, w, acc, acc2, li, lj
    cdef double sf2 = sf * sf
    cdef double sbf2 = sbf * sbf
    cdef double inv_sbl2 = 1.0 / (sbl * sbl)
    cdef double sbl3 = sbl * sbl * sbl

    # latent process
    C_arr = np.empty((nb, nb))
    B_arr = np.empty((nb, nb))
    LB_arr = np.empty((nb, nb))
    cdef double[:, ::1] C = C_arr
    cdef double[:, ::1] B = B_arr
    cdef double[:, ::1] LB = LB_arr
    for i in range(nb):
        for j in range(nb):
            d = rbar[i] - rbar[j]
            v = sbf2 * exp(-0.5 * d * d * inv_sbl2)
            C[i, j] = v
            B[i, j] = v
        B[i, i] += sbn * sbn
    cdef double jit_b = _factor(B, LB)
    cdef double rel_b = jit_b / (sbf2 + sbn * sbn)
    beta_arr = np.array(lbar, copy=True)
    cdef double[::1] beta = beta_arr
    _solve(LB, beta)

    Kx_arr = np.empty((n, nb))
    cdef double[:, ::1] Kx = Kx_arr
    ell_arr = np.empty(n)
    cdef double[::1] ell = ell_arr
    for i in range(n):
        acc = 0.0
        for k in range(nb):
            d = r[i] - rbar[k]
            v = sbf2 * exp(-0.5 * d * d * inv_sbl2)
            Kx[i, k] = v
            acc += v * beta[k]
        ell[i] = exp(acc)

    # observation process
    K_arr = np.empty((n, n))
    A_arr = np.empty((n, n))
    LA_arr = np.empty((n, n))
    cdef double[:, ::1] K = K_arr
    cdef double[:, ::1] A = A_arr
    cdef double[:, ::1] LA = LA_arr
    for i in range(n):
        li = ell[i]
        K[i, i] = sf2
        A[i, i] = sf2 + sn * sn
        for j in range(i + 1, n):
            lj = ell[j]
            d = r[i] - r[j]
            s = li * li + lj * lj
            v = sf2 * sqrt(li * lj / (0.5 * s)) * exp(-d * d / s)
            K[i, j] = v
            K[j, i] = v
            A[i, j] = v
            A[j, i] = v
    cdef double jit_a = _factor(A, LA)
    cdef double rel_a = jit_a / (sf2 + sn * sn)
    alpha_arr = np.array(z, copy=True)
    cdef double[::1] alpha = alpha_arr
    _solve(LA, alpha)

    cdef double quad_a = 0.0, quad_b = 0.0, logdet_a = 0.0, logdet_b = 0.0
    for i in range(n):
        quad_a += z[i] * alpha[i]
        logdet_a += log(LA[i, i])
    for k in range(nb):
        quad_b += lbar[k] * beta[k]
        logdet_b += log(LB[k, k])
    cdef double value = -0.5 * (quad_a + 2.0 * logdet_a + quad_b + 2.0 * logdet_b
                                + (n + nb) * LOG_2PI)
    if not want_grad:
        return value, None, None

    Ainv_arr = _inverse(LA)
    cdef double[:, ::1] Ainv = Ainv_arr
    g_arr = np.zeros(5)
    cdef double[::1] g = g_arr
    gu_arr = np.empty(n)
    cdef double[::1] g_u = gu_arr
    cdef double sumWK = 0.0, trW = 0.0
    for i in range(n):
        li = ell[i]
        acc = 0.0
        for j in range(n):
            w = alpha[i] * alpha[j] - Ainv[i, j]
            sumWK += w * K[i, j]
            if j == i:
                trW += w
                continue
            lj = ell[j]
            d = r[i] - r[j]
            d2 = d * d
            s = li * li + lj * lj
            acc += w * K[i, j] * (0.5 / li - li / s + 2.0 * li * d2 / (s * s))
        g_u[i] = acc * li
    g[0] = sumWK / sf + rel_a * sf * trW
    g[1] = sn * trW * (1.0 + rel_a)

    Binv_arr = _inverse(LB)
    cdef double[:, ::1] Binv = Binv_arr
    kg_arr = np.zeros(nb)
    cdef double[::1] kg = kg_arr
    gamma_arr = np.zeros(nb)
    cdef double[::1] gamma = gamma_arr
    for k in range(nb):
        acc = 0.0
        for i in range(n):
            acc += Kx[i, k] * g_u[i]
        kg[k] = acc
    for k in range(nb):
        acc = 0.0
        for j in range(nb):
            acc += Binv[k, j] * kg[j]
        gamma[k] = acc

    # A-chain terms g_u^T dKx beta
    cdef double chain_f = 0.0, chain_l = 0.0
    for i in range(n):
        acc = 0.0
        acc2 = 0.0
        for k in range(nb):
            d = r[i] - rbar[k]
            v = Kx[i, k] * beta[k]
            acc += v
            acc2 += v * d * d
        chain_f += g_u[i] * acc
        chain_l += g_u[i] * acc2
    chain_f *= 2.0 / sbf
    chain_l /= sbl3

    # gamma^T dB beta and 0.5 sum(Wb * dB)
    cdef double gb_f = 0.0, gb_l = 0.0, wb_f = 0.0, wb_l = 0.0
    cdef double gamma_beta = 0.0, trWb = 0.0
    for i in range(nb):
        gamma_beta += gamma[i] * beta[i]
        trWb += beta[i] * beta[i] - Binv[i, i]
        for j in range(nb):
            d = rbar[i] - rbar[j]
            d2 = d * d
            v = C[i, j]
            gb_f += gamma[i] * v * beta[j]
            gb_l += gamma[i] * v * d2 * beta[j]
            w = beta[i] * beta[j] - Binv[i, j]
            wb_f += w * v
            wb_l += w * v * d2
    gb_f *= 2.0 / sbf
    gb_l /= sbl3
    wb_f *= 2.0 / sbf
    wb_l /= sbl3
    cdef double jb = -gamma_beta + 0.5 * trWb
    g[2] = chain_f - gb_f + 0.5 * wb_f + 2.0 * rel_b * sbf * jb
    g[3] = chain_l - gb_l + 0.5 * wb_l
    g[4] = 2.0 * sbn * jb * (1.0 + rel_b)

    grad_lbar = gamma_arr - beta_arr
    return value, g_arr, grad_lbar
