"""End-to-end ground segmentation of one frame."""

from __future__ import annotations

import enum
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .gp import GroundModel, predict_ground, predict_lengthscales
from .grid_map import GridConfig, GroundCandidateSet, PolarGridMap, build_radial_grid
from .hyperopt import (FrameData, HyperParams, NoTrainableSegmentsError, OptimizeSchedule,
                       SegmentData, optimize)
from .kernels import NonStatKernelParams
from .line_extraction import CriticalPointCriteria, DemingConfig, extract_line_segments
from .metrics import smse
from .pseudo_input import DEFAULT_CLAMP, LatentTrainingSet, select_pseudo_inputs

log = logging.getLogger(__name__)

__all__ = [
    "Label",
    "SegmentationConfig",
    "SegmentProfile",
    "LabeledFrame",
    "LatentLayout",
    "build_latent_layout",
    "segment_frame",
]


class Label(enum.IntEnum):
    GROUND = 0
    OBSTACLE = 1
    UNASSIGNED = 2


@dataclass(frozen=True)
class SegmentationConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    criteria: CriticalPointCriteria = field(default_factory=CriticalPointCriteria)
    deming: DemingConfig = field(default_factory=DemingConfig)
    ground_threshold: float = 0.2
    outlier_iterations: int = 5
    outlier_fraction: float = 0.2
    outlier_residual: str = "fitted"
    optimize_hyperparams: bool = True
    theta: HyperParams = field(default_factory=HyperParams)
    pseudo_mode: str = "endpoints"
    latent_sharing: str = "shared"
    clamp: tuple = DEFAULT_CLAMP
    opt_max_iter: int = 100
    heldout_every: int = 5
    threads: int = 1

    def __post_init__(self):
        if not self.ground_threshold > 0:
            raise ValueError("ground_threshold must be positive")
        if self.outlier_iterations < 1:
            raise ValueError("outlier_iterations must be >= 1")
        if not 0 < self.outlier_fraction <= 1:
            raise ValueError("outlier_fraction must be in (0, 1]")
        if self.outlier_residual not in ("fitted", "loo"):
            raise ValueError("outlier_residual must be 'fitted' or 'loo'")
        if self.latent_sharing not in ("shared", "segment"):
            raise ValueError("latent_sharing must be 'shared' or 'segment'")
        if self.opt_max_iter < 0 or self.heldout_every < 0 or self.threads < 1:
            raise ValueError("opt_max_iter, heldout_every must be >= 0 and threads >= 1")


@dataclass(frozen=True)
class SegmentProfile:
    segment: int
    r: np.ndarray
    mean: np.ndarray
    variance: np.ndarray


@dataclass
class LabeledFrame:
    labels: np.ndarray
    profiles: list
    theta: HyperParams
    diagnostics: dict
    timings: dict
    smse: float = math.nan
    n_candidates: list = field(default_factory=list)
    n_pseudo: list = field(default_factory=list)

    @property
    def ground_mask(self) -> np.ndarray:
        return self.labels == Label.GROUND


@dataclass(frozen=True)
class LatentLayout:
    """Where each segment's pseudo-inputs live in the frame-wide vector."""

    rbar: dict
    index: dict
    init: np.ndarray


def build_latent_layout(latent_sets: dict, grid: GridConfig, sharing: str = "shared"):
    """Map per-segment latent sets onto the frame-wide log length-scale vector.

    ``shared``: pseudo-inputs snap to the radial bin centers, one vector
    entry per bin center shared by every segment; the initial value of an
    entry is the mean of the geometric guesses mapped to it.
    ``segment``: every pseudo-input keeps its own entry.
    """
    rbar, index = {}, {}
    if sharing == "segment":
        init, offset = [], 0
        for m in sorted(latent_sets):
            lat = latent_sets[m]
            rbar[m] = lat.locations.copy()
            index[m] = np.arange(offset, offset + lat.count)
            init.append(lat.log_lengthscales)
            offset += lat.count
        init = np.concatenate(init) if init else np.empty(0)
        return LatentLayout(rbar, index, init)
    if sharing != "shared":
        raise ValueError(f"unknown sharing mode {sharing!r}")
    centers = grid.bin_centers()
    sums = np.zeros(grid.num_bins)
    counts = np.zeros(grid.num_bins)
    for m in sorted(latent_sets):
        lat = latent_sets[m]
        g = np.clip(np.floor((lat.locations - grid.r_min) / grid.bin_width).astype(np.intp),
                    0, grid.num_bins - 1)
        vals = lat.log_lengthscales
        order = np.lexsort((vals, g))
        g, vals = g[order], vals[order]
        first = np.concatenate([[True], np.diff(g) > 0])
        g, vals = g[first], vals[first]
        rbar[m] = centers[g]
        index[m] = g
        np.add.at(sums, g, vals)
        np.add.at(counts, g, 1.0)
    init = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    if np.any(counts > 0):
        init[counts == 0] = float(np.mean(init[counts > 0]))
    return LatentLayout(rbar, index, init)


def _segment_latent(layout: LatentLayout, theta: HyperParams, m: int) -> LatentTrainingSet:
    return LatentTrainingSet(layout.rbar[m], theta.log_lengthscales[layout.index[m]])


def _fit_with_rejection(pg: GroundCandidateSet, latent, theta, cfg):
    """Iteratively drop candidates far from the fitted ground."""
    keep = np.arange(len(pg))
    for _ in range(cfg.outlier_iterations):
        offset = float(np.median(pg.z[keep]))
        model = GroundModel(pg.r[keep], pg.z[keep], latent, theta, offset)
        if cfg.outlier_residual == "loo":
            res = np.abs(model.loo_residuals())
        else:
            res = np.abs(pg.z[keep] - model.mean(pg.r[keep]))
        bad = np.flatnonzero(res > cfg.ground_threshold)
        if bad.size == 0:
            return model, keep
        limit = min(max(1, int(cfg.outlier_fraction * keep.size)), keep.size - 2)
        if limit <= 0:
            return model, keep
        worst = bad[np.argsort(-res[bad], kind="stable")[:limit]]
        keep = np.delete(keep, np.sort(worst))
    offset = float(np.median(pg.z[keep]))
    return GroundModel(pg.r[keep], pg.z[keep], latent, theta, offset), keep


def _profile(m, model: GroundModel, grid: GridConfig):
    centers = grid.bin_centers()
    lo, hi = model.r.min(), model.r.max()
    q = centers[(centers >= lo) & (centers <= hi)]
    if q.size == 0:
        q = np.array([0.5 * (lo + hi)])
    Lq = predict_lengthscales(model.latent, model.latent_params, q).lengthscales
    train = GroundCandidateSet(model.r, model.z - model.offset, np.zeros(model.r.size, np.intp),
                               np.zeros(model.r.size, np.intp), np.zeros(model.r.size))
    post = predict_ground(train, model.L_train, Lq,
                          NonStatKernelParams(model.signal_variance, model.noise_variance),
                          q)
    return SegmentProfile(m, q, post.mean + model.offset, post.variance)


def _heldout(pg, keep, latent, theta, every):
    """Heights and predictions at every ``every``-th inlier, fitted on the rest.

    The first and last inliers always stay in the training set so that held-out
    points are interpolated, never extrapolated.
    """
    if every <= 1 or keep.size < 3:
        return np.empty(0), np.empty(0)
    mask = np.zeros(keep.size, bool)
    mask[every // 2::every] = True
    mask[0] = mask[-1] = False
    if np.count_nonzero(~mask) < 2 or not mask.any():
        return np.empty(0), np.empty(0)
    train, held = keep[~mask], keep[mask]
    model = GroundModel(pg.r[train], pg.z[train], latent, theta,
                        float(np.median(pg.z[train])))
    return pg.z[held], model.mean(pg.r[held])


def _nearest_modeled(m, modeled, M):
    best, best_d = None, None
    for k in modeled:
        d = abs(k - m) % M
        d = min(d, M - d)
        if best_d is None or d < best_d or (d == best_d and k < best):
            best, best_d = k, d
    return best


def segment_frame(frame, config: SegmentationConfig | None = None,
                  grid_map: PolarGridMap | None = None) -> LabeledFrame:
    """Label every point of ``frame`` as ground, obstacle or unassigned."""
    cfg = config or SegmentationConfig()
    t0 = time.perf_counter()
    grid = grid_map if grid_map is not None else build_radial_grid(frame, cfg.grid)
    gcfg = grid.config
    M = gcfg.num_segments
    labels = np.full(grid.num_points, Label.UNASSIGNED, dtype=np.int8)
    t_grid = time.perf_counter()

    latent_sets = {}
    for m in range(M):
        pg = grid.candidates[m]
        if len(pg) < 2:
            continue
        lines = extract_line_segments(pg, cfg.criteria, cfg.deming)
        lat = select_pseudo_inputs(lines, pg, cfg.clamp, cfg.pseudo_mode)
        if lat.count:
            latent_sets[m] = lat
    t_line = time.perf_counter()

    layout = build_latent_layout(latent_sets, gcfg, cfg.latent_sharing)
    theta = cfg.theta
    if theta.log_lengthscales.size != layout.init.size:
        theta = theta.with_lbar(layout.init)
    diagnostics = {
        "discarded": grid.discarded,
        "rejected_nonfinite": grid.rejected_nonfinite,
        "degenerate_segments": [m for m in range(M) if m not in latent_sets],
        "optimizer_iterations": 0,
        "optimizer_status": "skipped",
        "outliers_removed": 0,
    }

    if cfg.optimize_hyperparams and latent_sets and cfg.opt_max_iter > 0:
        segs = []
        for m in sorted(latent_sets):
            pg = grid.candidates[m]
            segs.append(SegmentData(pg.r, pg.z - np.median(pg.z), layout.rbar[m],
                                    layout.index[m], m))
        try:
            res = optimize(FrameData(segs, layout.init.size), theta,
                           OptimizeSchedule(max_iter=cfg.opt_max_iter, threads=cfg.threads))
            theta = res.theta
            diagnostics["optimizer_iterations"] = res.iterations
            diagnostics["optimizer_status"] = res.converged
            diagnostics["optimizer_warning"] = res.warning
            diagnostics["objective"] = res.value
        except NoTrainableSegmentsError:
            diagnostics["optimizer_status"] = "no trainable segments"
    t_opt = time.perf_counter()

    def fit(m):
        pg = grid.candidates[m]
        latent = _segment_latent(layout, theta, m)
        model, keep = _fit_with_rejection(pg, latent, theta, cfg)
        held = _heldout(pg, keep, latent, theta, cfg.heldout_every)
        return m, model, keep, held

    items = sorted(latent_sets)

    def fit_all():
        if cfg.threads > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                return list(pool.map(fit, items))
        return [fit(m) for m in items]

    fitted = fit_all()

    models = {}
    held_y, held_mu = [], []
    for m, model, keep, (hy, hm) in fitted:
        models[m] = model
        diagnostics["outliers_removed"] += len(grid.candidates[m]) - keep.size
        held_y.append(hy)
        held_mu.append(hm)

    for m in range(M):
        idx = grid.segment_indices(m)
        if idx.size == 0:
            continue
        src = m if m in models else _nearest_modeled(m, models, M)
        if src is None:
            continue
        r = grid.r[idx]
        uniq, inv = np.unique(r, return_inverse=True)
        mu = models[src].mean(uniq)[inv]
        ground = np.abs(grid.z[idx] - mu) <= cfg.ground_threshold
        labels[idx] = np.where(ground, Label.GROUND, Label.OBSTACLE)
    profiles = [_profile(m, models[m], gcfg) for m in sorted(models)]
    t_pred = time.perf_counter()

    hy = np.concatenate(held_y) if held_y else np.empty(0)
    hm = np.concatenate(held_mu) if held_mu else np.empty(0)
    score = math.nan
    if hy.size >= 2 and np.var(hy) > 0:
        score = smse(hy, hm)

    timings = {
        "grid": t_grid - t0,
        "line": t_line - t_grid,
        "opt": t_opt - t_line,
        "pred": t_pred - t_opt,
        "total": t_pred - t0,
    }
    return LabeledFrame(
        labels=labels,
        profiles=profiles,
        theta=theta,
        diagnostics=diagnostics,
        timings=timings,
        smse=score,
        n_candidates=[len(grid.candidates[m]) for m in range(M)],
        n_pseudo=[int(layout.rbar[m].size) if m in layout.rbar else 0 for m in range(M)],
    )
