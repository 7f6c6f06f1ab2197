"""Latent training sets (pseudo-inputs) derived from line-segment geometry.

Every line-segment stands for one hypothetical surface; its pseudo-inputs
carry the log of the surface's radial extent as the length-scale guess.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid_map import GroundCandidateSet
from .line_extraction import LineSegmentModel

__all__ = [
    "LatentTrainingSet",
    "STRICTNESS_LEVELS",
    "DEFAULT_CLAMP",
    "select_pseudo_inputs",
    "strictness_fractions",
]

DEFAULT_CLAMP = (0.3, 30.0)

# strongest first; every level is a subset of the previous one
STRICTNESS_LEVELS = ("thirds", "endpoints", "midpoint")

_FRACTIONS = {
    "thirds": (0.0, 1.0 / 3.0, 0.5, 2.0 / 3.0, 1.0),
    "endpoints": (0.0, 0.5, 1.0),
    "midpoint": (0.5,),
}


def strictness_fractions(mode: str) -> tuple[float, ...]:
    try:
        return _FRACTIONS[mode]
    except KeyError:
        raise ValueError(f"unknown pseudo-input mode {mode!r}; "
                         f"expected one of {STRICTNESS_LEVELS}") from None


@dataclass(frozen=True)
class LatentTrainingSet:
    locations: np.ndarray
    log_lengthscales: np.ndarray

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=float)
        val = np.asarray(self.log_lengthscales, dtype=float)
        if loc.shape != val.shape or loc.ndim != 1:
            raise ValueError("locations and log_lengthscales must be equal-length 1-d arrays")
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "log_lengthscales", val)

    @property
    def count(self) -> int:
        return int(self.locations.size)

    def __len__(self):
        return self.count


def select_pseudo_inputs(segments: list[LineSegmentModel], pg: GroundCandidateSet,
                         clamp: tuple[float, float] = DEFAULT_CLAMP,
                         mode: str = "endpoints") -> LatentTrainingSet:
    """Place pseudo-inputs along each line-segment.

    Locations are at the fractions of the segment's radial span given by
    ``mode``; the target is ``ln(clip(r_extent, *clamp))``.  Coinciding
    locations (shared boundaries) are emitted once with the smaller value.
    """
    lo, hi = clamp
    if not 0 < lo <= hi:
        raise ValueError("clamp must satisfy 0 < L_min <= L_max")
    fracs = strictness_fractions(mode)
    if not segments:
        if len(pg) == 0:
            return LatentTrainingSet(np.empty(0), np.empty(0))
        mid = 0.5 * (float(np.min(pg.r)) + float(np.max(pg.r)))
        return LatentTrainingSet(np.array([mid]), np.array([np.log(hi)]))

    locs, vals = [], []
    for seg in segments:
        r0 = float(pg.r[seg.start_index])
        r1 = float(pg.r[seg.end_index])
        value = float(np.log(np.clip(seg.r_extent, lo, hi)))
        for f in fracs:
            locs.append(r0 + f * (r1 - r0))
            vals.append(value)
    locs = np.asarray(locs)
    vals = np.asarray(vals)
    order = np.lexsort((vals, locs))
    locs, vals = locs[order], vals[order]
    # after sorting by (location, value) the first of each run is the minimum
    keep = np.concatenate([[True], np.diff(locs) > 1e-9 * max(1.0, float(np.abs(locs).max()))])
    return LatentTrainingSet(locs[keep], vals[keep])
