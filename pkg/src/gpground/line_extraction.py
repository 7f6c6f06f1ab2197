"""Critical-point line extraction over a segment's ground candidates.

Lines are fitted with Deming (errors-in-variables) regression, where the
height noise variance is ``lam`` times the range noise variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid_map import GroundCandidateSet

__all__ = [
    "LineParams",
    "DemingConfig",
    "CriticalPointCriteria",
    "LineSegmentModel",
    "fit_line_deming",
    "deming_loglik",
    "point_line_distance",
    "extract_line_segments",
    "critical_points",
]


@dataclass(frozen=True)
class LineParams:
    """Line ``a*r + b*z + c = 0`` with ``a**2 + b**2 == 1`` and ``b >= 0``.

    For non-vertical lines ``z = alpha + beta * r``.
    """

    a: float
    b: float
    c: float

    @classmethod
    def from_slope(cls, alpha: float, beta: float) -> LineParams:
        norm = math.hypot(beta, 1.0)
        return cls(-beta / norm, 1.0 / norm, -alpha / norm)

    @property
    def vertical(self) -> bool:
        return self.b == 0.0

    @property
    def beta(self) -> float:
        return -self.a / self.b if self.b else math.inf

    @property
    def alpha(self) -> float:
        return -self.c / self.b if self.b else math.nan

    @property
    def angle(self) -> float:
        """Inclination of the line in radians, in ``(-pi/2, pi/2]``."""
        return math.atan2(-self.a, self.b) if self.b else math.pi / 2

    def height_at(self, r):
        return (-self.c - self.a * np.asarray(r, dtype=float)) / self.b


@dataclass(frozen=True)
class DemingConfig:
    lam: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")


@dataclass(frozen=True)
class CriticalPointCriteria:
    """Thresholds that end a line-segment.

    ``angle_jump`` (radians) and ``height_step`` (meters) also drive the
    refit jump test: a new point is critical when the refit inclination moves
    by more than ``angle_jump`` or the refit line height at the segment start
    moves by more than ``height_step``.  The jump test and the check of the
    new point against the previous line only run once the line rests on
    ``min_jump_support`` points; fewer points give too noisy a reference.
    """

    slope_threshold: float = 0.3
    fit_distance: float = 0.05
    horizontal_gap: float = 10.0
    density_jump: float = 2.0
    height_step: float = 0.15
    angle_jump: float = 0.02
    min_jump_support: int = 5

    def __post_init__(self):
        for name in ("slope_threshold", "fit_distance", "horizontal_gap",
                     "density_jump", "height_step", "angle_jump"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.min_jump_support < 2:
            raise ValueError("min_jump_support must be >= 2")


@dataclass(frozen=True)
class LineSegmentModel:
    start_index: int
    end_index: int
    params: LineParams
    r_extent: float
    mean_density: float
    merged: bool = False

    @property
    def size(self) -> int:
        return self.end_index - self.start_index + 1


def _moments(r, z):
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    rm, zm = r.mean(), z.mean()
    dr, dz = r - rm, z - zm
    n = r.size
    return rm, zm, float(dr @ dr) / n, float(dz @ dz) / n, float(dr @ dz) / n


def _deming_from_moments(rm, zm, srr, szz, srz, lam):
    if srr == 0.0 and szz == 0.0:
        raise ValueError("underdetermined: all points identical")
    D = szz - lam * srr
    if srz == 0.0:
        if D > 0:
            return LineParams(1.0, 0.0, -rm)
        return LineParams(0.0, 1.0, -zm)
    root = math.sqrt(D * D + 4.0 * lam * srz * srz)
    # pick the cancellation-free form of the positive root
    if D >= 0:
        beta = (D + root) / (2.0 * srz)
    else:
        beta = 2.0 * lam * srz / (root - D)
    return LineParams.from_slope(zm - beta * rm, beta)


def fit_line_deming(r, z, config: DemingConfig | None = None) -> LineParams:
    """Maximum-likelihood line with noise in both coordinates.

    The fitted line passes through the centroid; ``config.lam`` is the ratio
    of height-noise to range-noise variance.
    """
    lam = (config or DemingConfig()).lam
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    if r.size < 2:
        raise ValueError("underdetermined: need at least 2 points")
    return _deming_from_moments(*_moments(r, z), lam)


def deming_loglik(alpha, beta, r, z, lam):
    """Profile log-likelihood of ``(alpha, beta)`` under the structural model.

    The latent abscissae and the noise scale are maximized out analytically;
    the result is ``-n * log(S / n)`` up to a constant, where ``S`` is the sum
    of weighted squared residuals ``(z - alpha - beta r)^2 / (lam + beta^2)``.
    """
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    S = np.sum((z - alpha - beta * r) ** 2) / (lam + beta * beta)
    return -r.size * np.log(S / r.size)


def point_line_distance(r, z, line: LineParams):
    out = np.abs(line.a * np.asarray(r, dtype=float) + line.b * np.asarray(z, dtype=float)
                 + line.c)
    return out if out.ndim else float(out)


class _Running:
    """Running sums for incremental refits."""

    __slots__ = ("n", "sr", "sz", "srr", "szz", "srz")

    def __init__(self, r0, z0):
        self.n = 1
        self.sr, self.sz = r0, z0
        self.srr, self.szz, self.srz = r0 * r0, z0 * z0, r0 * z0

    def with_point(self, r, z):
        new = _Running.__new__(_Running)
        new.n = self.n + 1
        new.sr, new.sz = self.sr + r, self.sz + z
        new.srr, new.szz, new.srz = self.srr + r * r, self.szz + z * z, self.srz + r * z
        return new

    def fit(self, lam, origin):
        # moments about the mean, coordinates shifted by origin for stability
        n = self.n
        rm, zm = self.sr / n, self.sz / n
        srr = max(self.srr / n - rm * rm, 0.0)
        szz = max(self.szz / n - zm * zm, 0.0)
        srz = self.srz / n - rm * zm
        return _deming_from_moments(rm + origin[0], zm + origin[1], srr, szz, srz, lam)


def _close(r, z, dens, start, end, lam, merged=False):
    line = fit_line_deming(r[start:end + 1], z[start:end + 1], DemingConfig(lam))
    return LineSegmentModel(start, end, line, float(r[end] - r[start]),
                            float(np.mean(dens[start:end + 1])), merged)


def extract_line_segments(pg: GroundCandidateSet,
                          criteria: CriticalPointCriteria | None = None,
                          deming: DemingConfig | None = None) -> list[LineSegmentModel]:
    """Sweep the candidates in range order and cut at critical points.

    Checks per new point, in order: horizontal gap and height step against
    the previous candidate, density ratio, then (after refitting) member
    distance, slope threshold crossing, distance of the new point to the
    previous line and the refit jump test.  The new
    point starts a fresh line-segment when any check fires.  Single-point
    pieces are merged into the shorter neighbouring segment and flagged.
    """
    criteria = criteria or CriticalPointCriteria()
    lam = (deming or DemingConfig()).lam
    r = np.asarray(pg.r, dtype=float)
    z = np.asarray(pg.z, dtype=float)
    dens = np.asarray(pg.densities, dtype=float)
    n = r.size
    if n < 2:
        return []

    pieces = []  # (start, end) inclusive
    start = 0
    origin = (r[0], z[0])
    run = _Running(0.0, 0.0)
    prev_line = None
    for k in range(1, n):
        critical = False
        if r[k] - r[k - 1] > criteria.horizontal_gap:
            critical = True
        elif abs(z[k] - z[k - 1]) > criteria.height_step:
            critical = True
        else:
            lo, hi = sorted((dens[k - 1], dens[k]))
            if lo <= 0 or hi / lo > criteria.density_jump:
                critical = True
        if not critical:
            cand = run.with_point(r[k] - origin[0], z[k] - origin[1])
            line = cand.fit(lam, origin)
            m = k - start  # members before k
            if np.max(point_line_distance(r[start:k + 1], z[start:k + 1], line)) > criteria.fit_distance:
                critical = True
            elif prev_line is not None and (abs(prev_line.beta) <= criteria.slope_threshold
                                            < abs(line.beta)):
                critical = True
            elif prev_line is not None and m >= criteria.min_jump_support:
                if point_line_distance(r[k], z[k], prev_line) > criteria.fit_distance:
                    critical = True
                elif abs(line.angle - prev_line.angle) > criteria.angle_jump:
                    critical = True
                elif not line.vertical and not prev_line.vertical and abs(
                        line.height_at(r[start]) - prev_line.height_at(r[start])
                ) > criteria.height_step:
                    critical = True
        if critical:
            pieces.append((start, k - 1))
            start = k
            origin = (r[k], z[k])
            run = _Running(0.0, 0.0)
            prev_line = None
        else:
            run = cand
            prev_line = line
    pieces.append((start, n - 1))
    return _assemble(r, z, dens, pieces, lam)


def _assemble(r, z, dens, pieces, lam):
    merged_flags = [False] * len(pieces)
    pieces = [list(p) for p in pieces]
    i = 0
    while len(pieces) > 1 and i < len(pieces):
        s, e = pieces[i]
        if e > s:
            i += 1
            continue
        left = pieces[i - 1] if i > 0 else None
        right = pieces[i + 1] if i + 1 < len(pieces) else None
        ext = lambda p: r[p[1]] - r[p[0]]  # noqa: E731
        if right is None or (left is not None and ext(left) <= ext(right)):
            left[1] = e
            merged_flags[i - 1] = True
        else:
            right[0] = s
            merged_flags[i + 1] = True
        del pieces[i]
        del merged_flags[i]
        i = max(i - 1, 0)
    out = []
    for (s, e), flag in zip(pieces, merged_flags):
        if e <= s:
            continue
        if r[e] - r[s] <= 0:
            continue
        out.append(_close(r, z, dens, s, e, lam, flag))
    return out


def critical_points(segments: list[LineSegmentModel]) -> list[int]:
    """Indices that end a line-segment (the last segment's end excluded)."""
    return [seg.end_index for seg in segments[:-1]]
