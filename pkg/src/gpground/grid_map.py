"""Polar grid map: angular segments, radial bins, ground candidates.

A frame is an ``(n, 4)`` float array of ``x, y, z, intensity`` (an ``(n, 3)``
array is accepted and padded with zero intensity).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "Point3",
    "Point2",
    "GridConfig",
    "Bin",
    "GroundCandidateSet",
    "PolarGridMap",
    "MIN_SLAB_THICKNESS",
    "as_frame",
    "build_radial_grid",
    "extract_ground_candidates",
    "vertical_density",
]

MIN_SLAB_THICKNESS = 0.01


class Point3(NamedTuple):
    x: float
    y: float
    z: float
    intensity: float = 0.0


class Point2(NamedTuple):
    r: float
    z: float
    source_index: int


@dataclass(frozen=True)
class GridConfig:
    num_segments: int = 180
    num_bins: int = 120
    r_min: float = 0.5
    r_max: float = 80.0
    vertical_slabs: int = 4
    min_slab_thickness: float = MIN_SLAB_THICKNESS

    def __post_init__(self):
        if self.num_segments < 1 or self.num_bins < 1:
            raise ValueError("num_segments and num_bins must be >= 1")
        if not (0 <= self.r_min < self.r_max):
            raise ValueError("need 0 <= r_min < r_max")
        if self.vertical_slabs < 1:
            raise ValueError("vertical_slabs must be >= 1")
        if not self.min_slab_thickness > 0:
            raise ValueError("min_slab_thickness must be positive")

    @property
    def bin_width(self) -> float:
        return (self.r_max - self.r_min) / self.num_bins

    @property
    def segment_width(self) -> float:
        return 2.0 * np.pi / self.num_segments

    def bin_edges(self) -> np.ndarray:
        return np.linspace(self.r_min, self.r_max, self.num_bins + 1)

    def bin_centers(self) -> np.ndarray:
        e = self.bin_edges()
        return 0.5 * (e[:-1] + e[1:])


@dataclass(frozen=True)
class Bin:
    r: np.ndarray
    z: np.ndarray
    source_index: np.ndarray
    r_lo: float
    r_hi: float
    density: float = 0.0

    @property
    def points2d(self) -> list[Point2]:
        return [Point2(float(a), float(b), int(c))
                for a, b, c in zip(self.r, self.z, self.source_index)]

    @property
    def z_min(self) -> float:
        return float(self.z.min()) if self.z.size else np.nan

    @property
    def z_max(self) -> float:
        return float(self.z.max()) if self.z.size else np.nan

    def __len__(self):
        return int(self.r.size)


@dataclass(frozen=True)
class GroundCandidateSet:
    """Lowest point of every nonempty bin of one segment, ascending in r."""

    r: np.ndarray
    z: np.ndarray
    source_index: np.ndarray
    bin_index: np.ndarray
    densities: np.ndarray

    @classmethod
    def empty(cls) -> GroundCandidateSet:
        return cls(np.empty(0), np.empty(0), np.empty(0, dtype=np.intp),
                   np.empty(0, dtype=np.intp), np.empty(0))

    @property
    def candidates(self) -> list[Point2]:
        return [Point2(float(a), float(b), int(c))
                for a, b, c in zip(self.r, self.z, self.source_index)]

    def subset(self, mask_or_index) -> GroundCandidateSet:
        return GroundCandidateSet(self.r[mask_or_index], self.z[mask_or_index],
                                  self.source_index[mask_or_index],
                                  self.bin_index[mask_or_index],
                                  self.densities[mask_or_index])

    def __len__(self):
        return int(self.r.size)


@dataclass(frozen=True)
class PolarGridMap:
    """Frame partitioned into segments x bins.

    Point membership is stored flat: ``segment_of`` / ``bin_of`` per input
    point (``-1`` when discarded) and, per segment, the indices of its points
    sorted by bin.  ``bins(m)`` materializes the :class:`Bin` objects.
    """

    config: GridConfig
    r: np.ndarray
    z: np.ndarray
    segment_of: np.ndarray
    bin_of: np.ndarray
    candidates: list = field(repr=False)
    density: np.ndarray = field(repr=False)
    discarded: int = 0
    rejected_nonfinite: int = 0
    _order: np.ndarray = field(default=None, repr=False)
    _starts: np.ndarray = field(default=None, repr=False)

    @property
    def num_points(self) -> int:
        return int(self.segment_of.size)

    def cell_indices(self, m: int, n: int) -> np.ndarray:
        cell = m * self.config.num_bins + n
        return self._order[self._starts[cell]:self._starts[cell + 1]]

    def segment_indices(self, m: int) -> np.ndarray:
        nb = self.config.num_bins
        return self._order[self._starts[m * nb]:self._starts[(m + 1) * nb]]

    def bins(self, m: int) -> list[Bin]:
        edges = self.config.bin_edges()
        out = []
        for n in range(self.config.num_bins):
            idx = self.cell_indices(m, n)
            out.append(Bin(self.r[idx], self.z[idx], idx, float(edges[n]),
                           float(edges[n + 1]), float(self.density[m, n])))
        return out


def as_frame(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return np.empty((0, 4))
    if pts.ndim != 2 or pts.shape[1] not in (3, 4):
        raise ValueError("frame must have shape (n, 3) or (n, 4)")
    if pts.shape[1] == 3:
        pts = np.column_stack([pts, np.zeros(len(pts))])
    return pts


def _densities(z, cell, counts, n_cells, bin_width, slabs, eps):
    """Mean slab density per cell, vectorized over all points."""
    zmin = np.full(n_cells, np.inf)
    zmax = np.full(n_cells, -np.inf)
    np.minimum.at(zmin, cell, z)
    np.maximum.at(zmax, cell, z)
    extent = zmax - zmin
    out = np.zeros(n_cells)
    occupied = counts > 0
    degenerate = occupied & (extent <= 0)
    out[degenerate] = counts[degenerate] / (bin_width * eps)
    regular = occupied & ~degenerate
    if np.any(regular):
        thick = np.where(regular, extent / slabs, 1.0)
        slab = np.floor((z - zmin[cell]) / thick[cell]).astype(np.intp)
        np.clip(slab, 0, slabs - 1, out=slab)
        per_slab = np.bincount(cell * slabs + slab, minlength=n_cells * slabs)
        per_slab = per_slab.reshape(n_cells, slabs) / (bin_width * thick[:, None])
        out[regular] = per_slab[regular].mean(axis=1)
    return out


def build_radial_grid(frame, config: GridConfig | None = None) -> PolarGridMap:
    """Partition a frame into ``num_segments x num_bins`` polar cells."""
    config = config or GridConfig()
    pts = as_frame(frame)
    n_pts = len(pts)
    M, N = config.num_segments, config.num_bins
    segment_of = np.full(n_pts, -1, dtype=np.intp)
    bin_of = np.full(n_pts, -1, dtype=np.intp)
    finite = np.all(np.isfinite(pts[:, :3]), axis=1) if n_pts else np.empty(0, bool)
    rejected = int(n_pts - np.count_nonzero(finite))

    x, y, z = (np.where(finite, pts[:, k], 0.0) for k in range(3))
    r = np.hypot(x, y)
    keep = finite & (r >= config.r_min) & (r < config.r_max)
    theta = np.mod(np.arctan2(y, x), 2.0 * np.pi)
    seg = np.floor(theta / config.segment_width).astype(np.intp)
    seg = np.minimum(seg, M - 1)
    b = np.floor((r - config.r_min) / config.bin_width).astype(np.intp)
    b = np.clip(b, 0, N - 1)
    segment_of[keep] = seg[keep]
    bin_of[keep] = b[keep]

    kept = np.flatnonzero(keep)
    cell_kept = segment_of[kept] * N + bin_of[kept]
    # stable order by cell, then by height so each cell starts at its minimum
    order_local = np.lexsort((z[kept], cell_kept))
    order = kept[order_local]
    counts = np.bincount(cell_kept, minlength=M * N)
    starts = np.concatenate([[0], np.cumsum(counts)])

    density = np.zeros(M * N)
    if kept.size:
        density = _densities(z[kept], cell_kept, counts, M * N, config.bin_width,
                             config.vertical_slabs, config.min_slab_thickness)
    density = density.reshape(M, N)

    occupied = np.flatnonzero(counts)
    first = order[starts[occupied]]
    occ_seg = occupied // N
    occ_bin = occupied % N
    bounds = np.searchsorted(occ_seg, np.arange(M + 1))
    candidates = []
    for m in range(M):
        sl = slice(bounds[m], bounds[m + 1])
        idx = first[sl]
        bins = occ_bin[sl]
        candidates.append(GroundCandidateSet(r[idx], z[idx], idx, bins, density[m, bins]))

    return PolarGridMap(config=config, r=r, z=z, segment_of=segment_of, bin_of=bin_of,
                        candidates=candidates, density=density,
                        discarded=int(np.count_nonzero(finite & ~keep)),
                        rejected_nonfinite=rejected, _order=order, _starts=starts)


def extract_ground_candidates(segment: list[Bin]) -> GroundCandidateSet:
    """Lowest point of every nonempty bin; bins must be ordered by ``r_lo``."""
    r, z, src, bidx, dens = [], [], [], [], []
    for n, b in enumerate(segment):
        if len(b) == 0:
            continue
        k = int(np.argmin(b.z))
        r.append(b.r[k])
        z.append(b.z[k])
        src.append(b.source_index[k])
        bidx.append(n)
        dens.append(b.density)
    if not r:
        return GroundCandidateSet.empty()
    return GroundCandidateSet(np.array(r, float), np.array(z, float),
                              np.array(src, np.intp), np.array(bidx, np.intp),
                              np.array(dens, float))


def vertical_density(b: Bin, j: int, min_thickness: float = MIN_SLAB_THICKNESS) -> float:
    """Average per-slab point density of a bin split into ``j`` height slabs.

    Each slab's density is its point count over ``radial extent x slab height``.
    Degenerate bins (zero height extent) use ``min_thickness`` as the height.
    """
    if len(b) == 0:
        raise ValueError("bin is empty")
    width = b.r_hi - b.r_lo
    zmin, zmax = b.z_min, b.z_max
    if zmax <= zmin:
        return len(b) / (width * min_thickness)
    thick = (zmax - zmin) / j
    slab = np.clip(np.floor((b.z - zmin) / thick).astype(int), 0, j - 1)
    counts = np.bincount(slab, minlength=j)
    return float(np.mean(counts / (width * thick)))
