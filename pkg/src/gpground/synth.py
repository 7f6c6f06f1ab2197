"""Ray-cast synthetic LIDAR scenes with exact ground/obstacle labels.

Terrain height depends on range and azimuth sector only: each sector owns a
radial profile made of flat, slope and bump sections.  Obstacles are
axis-aligned boxes resting on the terrain.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

__all__ = [
    "SceneError",
    "TerrainSection",
    "Sector",
    "Box",
    "SensorSpec",
    "SceneSpec",
    "terrain_height",
    "synth_frame",
    "flat_scene",
    "slope_scene",
    "rough_scene",
    "scene_from_dict",
    "load_scene",
    "save_scene",
]

GROUND, OBSTACLE = 0, 1


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class TerrainSection:
    kind: str
    r_start: float
    r_end: float
    angle_deg: float = 0.0
    height: float = 0.0
    width: float = 0.0

    def __post_init__(self):
        if self.kind not in ("flat", "slope", "bump"):
            raise SceneError(f"unknown section kind {self.kind!r}")
        if not self.r_end > self.r_start >= 0:
            raise SceneError("section needs 0 <= r_start < r_end")
        if self.kind == "bump" and not 0 < self.width <= self.r_end - self.r_start:
            raise SceneError("bump width must be in (0, section length]")


@dataclass(frozen=True)
class Sector:
    az_start_deg: float
    az_end_deg: float
    sections: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "sections", tuple(
            s if isinstance(s, TerrainSection) else TerrainSection(**s) for s in self.sections))
        secs = sorted(self.sections, key=lambda s: s.r_start)
        for a, b in zip(secs, secs[1:]):
            if b.r_start < a.r_end - 1e-12:
                raise SceneError(f"overlapping terrain sections at r={b.r_start}")
        object.__setattr__(self, "sections", tuple(secs))


@dataclass(frozen=True)
class Box:
    center: tuple
    size: tuple


@dataclass(frozen=True)
class SensorSpec:
    height: float = 1.73
    rings: int = 64
    elev_min_deg: float = -24.8
    elev_max_deg: float = 2.0
    azimuth_resolution_deg: float = 0.5
    noise: tuple = (0.02, 0.02, 0.02)
    min_range: float = 0.5
    max_range: float = 80.0


@dataclass(frozen=True)
class SceneSpec:
    sectors: tuple = (Sector(0.0, 360.0),)
    obstacles: tuple = ()
    sensor: SensorSpec = field(default_factory=SensorSpec)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sectors", tuple(
            s if isinstance(s, Sector) else Sector(**s) for s in self.sectors))
        object.__setattr__(self, "obstacles", tuple(
            b if isinstance(b, Box) else Box(**b) for b in self.obstacles))
        if isinstance(self.sensor, dict):
            object.__setattr__(self, "sensor", SensorSpec(**self.sensor))
        if not self.sectors:
            raise SceneError("at least one sector is required")


def _profile(sections, r):
    """Height along one sector's radial profile; continuous in ``r``."""
    r = np.asarray(r, dtype=float)
    z = np.zeros_like(r)
    base = 0.0
    for s in sections:
        inside = (r >= s.r_start) & (r < s.r_end)
        after = r >= s.r_end
        if s.kind == "slope":
            t = math.tan(math.radians(s.angle_deg))
            z[inside] = base + t * (r[inside] - s.r_start)
            base += t * (s.r_end - s.r_start)
        elif s.kind == "bump":
            c = 0.5 * (s.r_start + s.r_end)
            u = (r[inside] - (c - 0.5 * s.width)) / s.width
            hump = np.where((u >= 0) & (u <= 1), 0.5 * s.height * (1 - np.cos(2 * np.pi * u)), 0.0)
            z[inside] = base + hump
        else:
            z[inside] = base
        z[after] = base
    return z


def _sector_of(spec: SceneSpec, az_deg):
    az = np.mod(np.asarray(az_deg, dtype=float), 360.0)
    out = np.full(az.shape, -1, dtype=np.intp)
    for k, s in enumerate(spec.sectors):
        lo, hi = s.az_start_deg % 360.0, s.az_end_deg % 360.0
        if s.az_end_deg - s.az_start_deg >= 360.0:
            hit = np.ones(az.shape, bool)
        elif lo < hi:
            hit = (az >= lo) & (az < hi)
        else:
            hit = (az >= lo) | (az < hi)
        out[(out < 0) & hit] = k
    return out


def terrain_height(spec: SceneSpec, x, y):
    """Ground height below ``(x, y)``; zero where no sector applies."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = np.hypot(x, y)
    sec = _sector_of(spec, np.degrees(np.arctan2(y, x)))
    z = np.zeros(np.broadcast(x, y).shape)
    for k, s in enumerate(spec.sectors):
        sel = sec == k
        if np.any(sel):
            z[sel] = _profile(s.sections, r[sel])
    return z


def _box_bounds(spec: SceneSpec, box: Box):
    cx, cy = box.center[:2]
    sx, sy, sz = box.size
    xs = cx + np.array([-0.5, 0.5, -0.5, 0.5, 0.0]) * sx
    ys = cy + np.array([-0.5, -0.5, 0.5, 0.5, 0.0]) * sy
    base = float(np.min(terrain_height(spec, xs, ys))) - 0.05
    lo = np.array([cx - 0.5 * sx, cy - 0.5 * sy, base])
    hi = np.array([cx + 0.5 * sx, cy + 0.5 * sy, base + sz])
    return lo, hi


def _terrain_hits(spec: SceneSpec, elev, step=0.01):
    """Horizontal hit range for every (ring, sector); ``inf`` on a miss."""
    sen = spec.sensor
    rho = np.arange(sen.min_range, sen.max_range + step, step)
    out = np.full((elev.size, len(spec.sectors)), np.inf)
    tan_e = np.tan(elev)
    for k, s in enumerate(spec.sectors):
        h = _profile(s.sections, rho)
        gap = sen.height + rho[None, :] * tan_e[:, None] - h[None, :]
        below = gap <= 0
        has = below.any(axis=1)
        first = np.argmax(below, axis=1)
        for i in np.flatnonzero(has):
            j = first[i]
            if j == 0:
                out[i, k] = rho[0]
                continue
            g0, g1 = gap[i, j - 1], gap[i, j]
            out[i, k] = rho[j - 1] + step * g0 / (g0 - g1)
    return out


def synth_frame(spec: SceneSpec):
    """Ray-cast the scene; returns ``(frame (n, 4), truth labels (n,))``.

    Truth is 0 for terrain returns and 1 for box returns.  Returns outside
    ``[min_range, max_range)`` are dropped.  Noise is added per axis after
    the hit is computed.
    """
    sen = spec.sensor
    elev = np.radians(np.linspace(sen.elev_min_deg, sen.elev_max_deg, sen.rings))
    n_az = int(round(360.0 / sen.azimuth_resolution_deg))
    az_deg = (np.arange(n_az) + 0.5) * (360.0 / n_az)
    az = np.radians(az_deg)
    sector = _sector_of(spec, az_deg)
    hits = _terrain_hits(spec, elev)

    # rays ordered azimuth-major, like a spinning sensor
    A, E = np.meshgrid(np.arange(n_az), np.arange(sen.rings), indexing="ij")
    A, E = A.ravel(), E.ravel()
    ce, se = np.cos(elev[E]), np.sin(elev[E])
    d = np.column_stack([ce * np.cos(az[A]), ce * np.sin(az[A]), se])
    rho_t = np.where(sector[A] >= 0, hits[E, np.maximum(sector[A], 0)], np.inf)
    t_ground = rho_t / ce
    origin = np.array([0.0, 0.0, sen.height])

    t_box = np.full(A.size, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        for box in spec.obstacles:
            lo, hi = _box_bounds(spec, box)
            t1 = (lo[None, :] - origin[None, :]) * inv
            t2 = (hi[None, :] - origin[None, :]) * inv
            tmin = np.nanmax(np.minimum(t1, t2), axis=1)
            tmax = np.nanmin(np.maximum(t1, t2), axis=1)
            ok = (tmax >= tmin) & (tmax > 0)
            t_enter = np.where(ok, np.maximum(tmin, 0.0), np.inf)
            t_box = np.minimum(t_box, t_enter)

    t = np.minimum(t_ground, t_box)
    truth = np.where(t_box < t_ground, OBSTACLE, GROUND).astype(np.int8)
    valid = np.isfinite(t)
    pts = origin[None, :] + t[:, None] * d
    # terrain returns sit exactly on the surface
    g = valid & (truth == GROUND)
    pts[g, 2] = terrain_height(spec, pts[g, 0], pts[g, 1])
    r = np.hypot(pts[:, 0], pts[:, 1])
    valid &= (r >= sen.min_range) & (r < sen.max_range)
    pts, truth = pts[valid], truth[valid]

    rng = np.random.default_rng(spec.seed)
    noise = rng.normal(size=pts.shape) * np.asarray(sen.noise, dtype=float)[None, :]
    pts = pts + noise
    # noise must not push points outside the sensor range
    r = np.hypot(pts[:, 0], pts[:, 1])
    keep = (r >= sen.min_range) & (r < sen.max_range)
    pts, truth = pts[keep], truth[keep]
    intensity = np.where(truth == OBSTACLE, 0.6, 0.2)
    return np.column_stack([pts, intensity]), truth


def flat_scene(seed=0, sensor: SensorSpec | None = None, obstacles=()) -> SceneSpec:
    return SceneSpec(sectors=(Sector(0.0, 360.0, ()),), obstacles=tuple(obstacles),
                     sensor=sensor or SensorSpec(), seed=seed)


def slope_scene(angle_deg, r_start=0.0, seed=0, sensor: SensorSpec | None = None) -> SceneSpec:
    sensor = sensor or SensorSpec()
    sec = Sector(0.0, 360.0, (TerrainSection("slope", r_start, sensor.max_range + 1.0,
                                             angle_deg=angle_deg),))
    return SceneSpec(sectors=(sec,), sensor=sensor, seed=seed)


def rough_scene(seed, n_sectors=12, n_obstacles=10, max_slope_deg=8.0, max_bump=0.1,
                sensor: SensorSpec | None = None) -> SceneSpec:
    """Random rough terrain: per-sector runs of slopes, bumps and flats."""
    rng = np.random.default_rng(seed)
    sensor = sensor or SensorSpec()
    width = 360.0 / n_sectors
    sectors = []
    for k in range(n_sectors):
        secs = []
        r = float(rng.uniform(4.0, 10.0))
        secs.append(TerrainSection("flat", 0.0, r))
        while r < sensor.max_range + 1.0:
            length = float(rng.uniform(6.0, 18.0))
            kind = rng.choice(["slope", "slope", "bump", "flat"])
            if kind == "slope":
                ang = float(rng.uniform(-max_slope_deg, max_slope_deg))
                secs.append(TerrainSection("slope", r, r + length, angle_deg=ang))
            elif kind == "bump":
                w = float(rng.uniform(2.0, min(6.0, length)))
                h = float(rng.uniform(0.03, max_bump))
                secs.append(TerrainSection("bump", r, r + length, height=h, width=w))
            else:
                secs.append(TerrainSection("flat", r, r + length))
            r += length
        sectors.append(Sector(k * width, (k + 1) * width, tuple(secs)))
    boxes = []
    while len(boxes) < n_obstacles:
        dist = float(rng.uniform(6.0, 35.0))
        ang = float(rng.uniform(0, 2 * np.pi))
        size = (float(rng.uniform(1.5, 4.5)), float(rng.uniform(1.5, 2.5)),
                float(rng.uniform(1.0, 2.0)))
        c = (dist * math.cos(ang), dist * math.sin(ang))
        if any(math.hypot(c[0] - b.center[0], c[1] - b.center[1]) < 5.0 for b in boxes):
            continue
        boxes.append(Box(c, size))
    return SceneSpec(sectors=tuple(sectors), obstacles=tuple(boxes), sensor=sensor,
                     seed=int(seed))


def scene_from_dict(data: dict) -> SceneSpec:
    try:
        return SceneSpec(
            sectors=tuple(Sector(s["az_start_deg"], s["az_end_deg"],
                                 tuple(TerrainSection(**t) for t in s.get("sections", ())))
                          for s in data.get("sectors", [{"az_start_deg": 0.0,
                                                         "az_end_deg": 360.0}])),
            obstacles=tuple(Box(tuple(b["center"]), tuple(b["size"]))
                            for b in data.get("obstacles", ())),
            sensor=SensorSpec(**{k: tuple(v) if isinstance(v, list) else v
                                 for k, v in data.get("sensor", {}).items()}),
            seed=int(data.get("seed", 0)),
        )
    except (KeyError, TypeError) as exc:
        raise SceneError(f"bad scene description: {exc}") from None


def load_scene(path) -> SceneSpec:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SceneError(f"{path}: {exc}") from None
    return scene_from_dict(data)


def save_scene(spec: SceneSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(asdict(spec), fh, indent=1)
