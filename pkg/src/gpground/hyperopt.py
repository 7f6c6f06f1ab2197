"""Whole-frame hyperparameter learning.

All segments of a frame share one parameter set; the frame objective is the
sum of per-segment log marginal likelihoods (height process plus latent
process).  Per-segment terms come from the compiled kernel when available.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from . import _backend
from .kernels import GramMatrix

log = logging.getLogger(__name__)

__all__ = [
    "HyperParams",
    "SegmentData",
    "FrameData",
    "FrameObjectiveState",
    "OptimizeSchedule",
    "OptimizeResult",
    "NoTrainableSegmentsError",
    "log_marginal",
    "segment_objective",
    "frame_objective",
    "frame_gradient",
    "optimize",
]

SCALAR_NAMES = ("sigma_f", "sigma_n", "sigma_bar_f", "sigma_bar_l", "sigma_bar_n")


class NoTrainableSegmentsError(ValueError):
    pass


@dataclass(frozen=True)
class HyperParams:
    sigma_f: float = 1.0
    sigma_n: float = 0.3
    sigma_bar_f: float = 1.0
    sigma_bar_l: float = 5.0
    sigma_bar_n: float = 0.1
    log_lengthscales: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        for name in SCALAR_NAMES:
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        object.__setattr__(self, "log_lengthscales",
                           np.asarray(self.log_lengthscales, dtype=float).ravel())

    def scalars(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in SCALAR_NAMES])

    def to_vector(self) -> np.ndarray:
        """``[sigma_f, sigma_n, sigma_bar_f, sigma_bar_l, sigma_bar_n, *L_bar]``."""
        return np.concatenate([self.scalars(), self.log_lengthscales])

    @classmethod
    def from_vector(cls, v) -> HyperParams:
        v = np.asarray(v, dtype=float)
        return cls(*map(float, v[:5]), log_lengthscales=v[5:].copy())

    def with_lbar(self, lbar) -> HyperParams:
        return replace(self, log_lengthscales=np.asarray(lbar, dtype=float))


@dataclass(frozen=True)
class SegmentData:
    """Training data of one segment.

    ``z`` must already be centered.  ``latent_index`` maps each pseudo-input
    to its entry in the frame-wide ``log_lengthscales`` vector.
    """

    r: np.ndarray
    z: np.ndarray
    rbar: np.ndarray
    latent_index: np.ndarray
    segment: int = -1

    @property
    def n(self) -> int:
        return int(self.r.size)

    @property
    def n_latent(self) -> int:
        return int(self.rbar.size)


@dataclass(frozen=True)
class FrameData:
    segments: tuple
    n_latent: int

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        for s in self.segments:
            if s.latent_index.size and s.latent_index.max() >= self.n_latent:
                raise ValueError("latent index out of range")

    def concat(self, other: FrameData) -> FrameData:
        if other.n_latent != self.n_latent:
            raise ValueError("frames must share the latent vector layout")
        return FrameData(self.segments + other.segments, self.n_latent)

    def trainable(self) -> tuple:
        return tuple(s for s in self.segments if s.n >= 2 and s.n_latent >= 1)


@dataclass
class FrameObjectiveState:
    value: float
    gradient: np.ndarray | None
    segment_values: list
    counts: list  # (n_m, nbar_m) per trainable segment


def log_marginal(y, gram_matrix: GramMatrix) -> float:
    """Gaussian log density of ``y`` under ``N(0, gram_matrix.values)``."""
    y = np.asarray(y, dtype=float)
    chol = gram_matrix.chol
    if chol is None:
        chol = np.linalg.cholesky(gram_matrix.values)
    alpha = scipy.linalg.cho_solve((chol, True), y, check_finite=False)
    return float(-0.5 * (y @ alpha) - np.sum(np.log(np.diag(chol)))
                 - 0.5 * y.size * math.log(2 * math.pi))


def segment_objective(seg: SegmentData, theta: HyperParams, want_grad=True, core=None):
    """``(value, grad_scalars, grad_lbar_segment)`` for one segment."""
    core = core or _backend.segment_term
    lbar = theta.log_lengthscales[seg.latent_index]
    return core(seg.r, seg.z, seg.rbar, lbar, theta.scalars(), want_grad)


def _map(fn, items, threads):
    if threads and threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def frame_objective(frame: FrameData, theta: HyperParams, want_grad=True,
                    threads: int | None = None, core=None) -> FrameObjectiveState:
    """Sum of segment objectives and (optionally) its gradient.

    The value is reduced with ``math.fsum`` so it is independent of segment
    order and thread count.  The gradient has ``5 + n_latent`` entries in the
    order of :meth:`HyperParams.to_vector`.
    """
    segs = frame.trainable()
    if not segs:
        raise NoTrainableSegmentsError("no trainable segments")
    if theta.log_lengthscales.size != frame.n_latent:
        raise ValueError(f"theta has {theta.log_lengthscales.size} latent values, "
                         f"frame needs {frame.n_latent}")
    terms = _map(lambda s: segment_objective(s, theta, want_grad, core), segs, threads)
    values = [t[0] for t in terms]
    value = math.fsum(values)
    grad = None
    if want_grad:
        g5 = np.array([math.fsum(t[1][k] for t in terms) for k in range(5)])
        idx = np.concatenate([s.latent_index for s in segs])
        contrib = np.concatenate([t[2] for t in terms])
        # order-independent per-entry exact sums
        gl = np.zeros(frame.n_latent)
        order = np.argsort(idx, kind="stable")
        bounds = np.searchsorted(idx[order], np.arange(frame.n_latent + 1))
        for j in range(frame.n_latent):
            sl = order[bounds[j]:bounds[j + 1]]
            if sl.size:
                gl[j] = math.fsum(contrib[sl])
        grad = np.concatenate([g5, gl])
    return FrameObjectiveState(value, grad, values, [(s.n, s.n_latent) for s in segs])


def frame_gradient(frame: FrameData, theta: HyperParams, threads: int | None = None,
                   core=None) -> np.ndarray:
    return frame_objective(frame, theta, True, threads, core).gradient


@dataclass(frozen=True)
class OptimizeSchedule:
    max_iter: int = 500
    grad_tol: float = 1e-5
    rel_tol: float = 1e-9
    step_init: float = 0.05
    step_min: float = 1e-8
    step_max: float = 1.0
    grow: float = 1.2
    shrink: float = 0.5
    max_failures: int = 5
    free_scalars: tuple = (True, True, True, True, True)
    free_lbar: bool = True
    threads: int | None = None


@dataclass
class OptimizeResult:
    theta: HyperParams
    value: float
    iterations: int
    evaluations: int
    converged: str
    warning: bool = False
    history: list = field(default_factory=list)


def _to_x(theta: HyperParams) -> np.ndarray:
    return np.concatenate([np.log(theta.scalars()), theta.log_lengthscales])


def _from_x(x) -> HyperParams:
    return HyperParams(*map(float, np.exp(x[:5])), log_lengthscales=x[5:].copy())


def optimize(frame: FrameData, theta_init: HyperParams,
             schedule: OptimizeSchedule | None = None, core=None) -> OptimizeResult:
    """Maximize the frame objective by diagonally scaled gradient ascent.

    The five scalars are optimized as logs.  Each coordinate keeps its own
    step which grows while the gradient sign persists and shrinks (with the
    move skipped) on a sign flip; a step that lowers the objective is
    rejected and all steps are halved.  The best parameters seen are
    returned.
    """
    sch = schedule or OptimizeSchedule()
    x = _to_x(theta_init)
    dim = x.size
    free = np.concatenate([np.asarray(sch.free_scalars, bool),
                           np.full(dim - 5, bool(sch.free_lbar))])

    def evaluate(xv):
        th = _from_x(xv)
        st = frame_objective(frame, th, True, sch.threads, core)
        g = st.gradient.copy()
        g[:5] *= th.scalars()  # chain rule into log-space
        g[~free] = 0.0
        return st.value, g

    value, g = evaluate(x)
    best = theta_init
    evaluations = 1
    history = [value]
    if not np.all(np.isfinite(g)) or not math.isfinite(value):
        raise FloatingPointError("objective not finite at the initial parameters")
    steps = np.full(dim, sch.step_init)
    g_prev = np.zeros(dim)
    failures = 0
    warning = False
    converged = "max_iter"
    it = 0
    while it < sch.max_iter:
        if np.max(np.abs(g)) < sch.grad_tol:
            converged = "grad_tol"
            break
        it += 1
        sign_prod = g * g_prev
        steps = np.where(sign_prod > 0, np.minimum(steps * sch.grow, sch.step_max), steps)
        steps = np.where(sign_prod < 0, np.maximum(steps * sch.shrink, sch.step_min), steps)
        move = np.where(sign_prod < 0, 0.0, np.sign(g) * steps)
        x_new = x + move
        try:
            v_new, g_new = evaluate(x_new)
            evaluations += 1
            ok = math.isfinite(v_new) and np.all(np.isfinite(g_new))
        except (np.linalg.LinAlgError, FloatingPointError, ValueError, OverflowError) as exc:
            log.debug("evaluation failed at iteration %d: %s", it, exc)
            evaluations += 1
            ok = False
            failures += 1
            if failures > sch.max_failures:
                warning = True
                converged = "failures"
                break
            steps = np.maximum(steps * 0.5, sch.step_min)
            g_prev = np.zeros(dim)
            continue
        if not ok:
            failures += 1
            if failures > sch.max_failures:
                warning = True
                converged = "failures"
                break
            steps = np.maximum(steps * 0.5, sch.step_min)
            g_prev = np.zeros(dim)
            continue
        if v_new < value:
            steps = np.maximum(steps * sch.shrink, sch.step_min)
            g_prev = np.zeros(dim)
            if np.all(steps[free] <= sch.step_min):
                converged = "step_min"
                break
            continue
        rel = abs(v_new - value) / max(abs(value), 1e-300)
        g_prev = np.where(sign_prod < 0, 0.0, g)
        x, value, g = x_new, v_new, g_new
        best = _from_x(x)
        history.append(value)
        if rel < sch.rel_tol and np.any(move != 0):
            converged = "rel_tol"
            break
    return OptimizeResult(best, value, it, evaluations, converged, warning, history)
