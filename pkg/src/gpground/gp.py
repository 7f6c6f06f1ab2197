"""Exact GP prediction for the two-layer ground model.

The latent process maps range to log length-scale; its posterior mean,
exponentiated, supplies the per-point length-scales of the height process.
Both processes have zero prior mean; callers center heights beforehand.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .kernels import NonStatKernelParams, SEKernelParams, gram, nonstat_matrix, se_matrix
from .pseudo_input import LatentTrainingSet

__all__ = [
    "GroundPosterior",
    "LengthscalePrediction",
    "predict_lengthscales",
    "predict_ground",
    "GroundModel",
]


@dataclass(frozen=True)
class LengthscalePrediction:
    query_r: np.ndarray
    lengthscales: np.ndarray
    latent_mean: np.ndarray
    latent_variance: np.ndarray


@dataclass(frozen=True)
class GroundPosterior:
    query_r: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    clamped: int = 0


def _posterior(cross, G, y, prior_diag):
    """Mean and variance from cross-covariances and a factorized Gram."""
    mean = cross @ G.solve(y)
    v = scipy.linalg.solve_triangular(G.chol, cross.T, lower=True, check_finite=False)
    var = prior_diag - np.sum(v * v, axis=0)
    return mean, var


def predict_lengthscales(latent: LatentTrainingSet, params: SEKernelParams,
                         query_r) -> LengthscalePrediction:
    if latent.count == 0:
        raise ValueError("latent training set is empty")
    q = np.atleast_1d(np.asarray(query_r, dtype=float))
    G = gram(latent.locations, params)
    cross = se_matrix(q, latent.locations, params)
    mean, var = _posterior(cross, G, latent.log_lengthscales, params.signal_variance)
    return LengthscalePrediction(q, np.exp(mean), mean, np.maximum(var, 0.0))


def predict_ground(train, L_train, L_query, params: NonStatKernelParams,
                   query_r) -> GroundPosterior:
    """Posterior of the height process at ``query_r``.

    ``train`` is anything with ``r`` and ``z`` arrays (e.g. a
    :class:`~gpground.grid_map.GroundCandidateSet`).  ``params.lengthscales``
    is ignored in favour of ``L_train`` / ``L_query``.
    """
    r = np.asarray(train.r, dtype=float)
    z = np.asarray(train.z, dtype=float)
    if r.size == 0:
        raise ValueError("training set is empty")
    L_train = np.asarray(L_train, dtype=float)
    q = np.atleast_1d(np.asarray(query_r, dtype=float))
    L_query = np.atleast_1d(np.asarray(L_query, dtype=float))
    if L_train.shape != r.shape or L_query.shape != q.shape:
        raise ValueError("length-scale vectors must match their locations")
    p = NonStatKernelParams(params.signal_variance, params.noise_variance, L_train)
    G = gram(r, p)
    cross = nonstat_matrix(q, L_query, r, L_train, params.signal_variance)
    mean, var = _posterior(cross, G, z, params.signal_variance)
    neg = var < 0
    return GroundPosterior(q, mean, np.where(neg, 0.0, var), int(np.count_nonzero(neg)))


class GroundModel:
    """A fitted two-layer model for one segment, reusable across queries."""

    def __init__(self, r, z, latent: LatentTrainingSet, theta, offset: float = 0.0):
        self.r = np.asarray(r, dtype=float)
        self.z = np.asarray(z, dtype=float)
        self.latent = latent
        self.offset = float(offset)
        self.latent_params = SEKernelParams(theta.sigma_bar_f ** 2, theta.sigma_bar_l,
                                            theta.sigma_bar_n ** 2)
        self.signal_variance = theta.sigma_f ** 2
        self.noise_variance = theta.sigma_n ** 2
        self._lat_G = gram(latent.locations, self.latent_params)
        self._lat_beta = self._lat_G.solve(latent.log_lengthscales)
        self.L_train = self.lengthscales(self.r)
        p = NonStatKernelParams(self.signal_variance, self.noise_variance, self.L_train)
        self._G = gram(self.r, p)
        self._alpha = self._G.solve(self.z - self.offset)

    def lengthscales(self, q):
        q = np.asarray(q, dtype=float)
        return np.exp(se_matrix(q, self.latent.locations, self.latent_params) @ self._lat_beta)

    def mean(self, q):
        q = np.asarray(q, dtype=float)
        cross = nonstat_matrix(q, self.lengthscales(q), self.r, self.L_train,
                               self.signal_variance)
        return cross @ self._alpha + self.offset

    def loo_residuals(self):
        """Leave-one-out residuals ``z_i - mu_{-i}`` at the training points."""
        Ainv_diag = np.sum(scipy.linalg.solve_triangular(
            self._G.chol, np.eye(self.r.size), lower=True, check_finite=False) ** 2, axis=0)
        return self._alpha / Ainv_diag
