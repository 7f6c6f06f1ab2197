"""Frame, label, profile, configuration and parameter file I/O."""

from __future__ import annotations

import dataclasses
import json
import os
import re
from pathlib import Path

import numpy as np

from .hyperopt import HyperParams
from .pipeline import SegmentationConfig

__all__ = [
    "FrameFormatError",
    "ConfigError",
    "FORMATS",
    "read_frame",
    "write_frame",
    "write_labels",
    "read_labels",
    "write_profiles",
    "read_profiles",
    "load_config",
    "dump_config",
    "config_from_mapping",
    "save_theta",
    "load_theta",
]

FORMATS = ("kitti-bin", "xyz-csv")
_SPLIT = re.compile(r"[,\s]+")


class FrameFormatError(ValueError):
    pass


class ConfigError(ValueError):
    pass


def read_frame(path, fmt: str = "kitti-bin") -> np.ndarray:
    """Read a frame as an ``(n, 4)`` float64 array ``x, y, z, intensity``."""
    path = Path(path)
    if fmt == "kitti-bin":
        raw = path.read_bytes()
        rem = len(raw) % 16
        if rem:
            raise FrameFormatError(
                f"{path}: truncated record at byte offset {len(raw) - rem} "
                f"(file size {len(raw)} is not a multiple of 16)")
        return np.frombuffer(raw, dtype="<f4").reshape(-1, 4).astype(np.float64)
    if fmt == "xyz-csv":
        rows = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                text = line.split("#", 1)[0].strip()
                if not text:
                    continue
                fields = [f for f in _SPLIT.split(text) if f]
                if len(fields) not in (3, 4):
                    raise FrameFormatError(f"{path}:{lineno}: expected 3 or 4 values, "
                                           f"got {len(fields)}")
                try:
                    vals = [float(f) for f in fields]
                except ValueError:
                    raise FrameFormatError(f"{path}:{lineno}: cannot parse {text!r}") from None
                if len(vals) == 3:
                    vals.append(0.0)
                rows.append(vals)
        return np.array(rows, dtype=np.float64).reshape(-1, 4)
    raise FrameFormatError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def write_frame(path, frame, fmt: str = "kitti-bin") -> None:
    pts = np.asarray(frame, dtype=np.float64)
    if pts.size == 0:
        pts = np.empty((0, 4))
    if pts.shape[1] == 3:
        pts = np.column_stack([pts, np.zeros(len(pts))])
    if fmt == "kitti-bin":
        Path(path).write_bytes(pts.astype("<f4").tobytes())
    elif fmt == "xyz-csv":
        with open(path, "w", encoding="utf-8") as fh:
            for row in pts:
                fh.write(",".join(f"{v:.9g}" for v in row) + "\n")
    else:
        raise FrameFormatError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def write_labels(labels, path) -> None:
    """One label digit per line: 0 ground, 1 obstacle, 2 unassigned."""
    lab = getattr(labels, "labels", labels)
    lab = np.asarray(lab, dtype=np.int64)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("".join(f"{v}\n" for v in lab))


def read_labels(path) -> np.ndarray:
    with open(path, encoding="ascii") as fh:
        tokens = fh.read().split()
    out = np.array([int(t) for t in tokens], dtype=np.int8)
    if out.size and (out.min() < 0 or out.max() > 2):
        raise FrameFormatError(f"{path}: label values must be 0, 1 or 2")
    return out


def write_profiles(profiles, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("segment_index,r,mu,variance\n")
        for p in profiles:
            for r, mu, var in zip(p.r, p.mean, p.variance):
                fh.write(f"{p.segment},{r:.9g},{mu:.9g},{var:.9g}\n")


def read_profiles(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


# flat key -> (section, field, parser)
def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_KEYS = {
    "num_segments": ("grid", "num_segments", int),
    "num_bins": ("grid", "num_bins", int),
    "r_min": ("grid", "r_min", float),
    "r_max": ("grid", "r_max", float),
    "vertical_slabs": ("grid", "vertical_slabs", int),
    "min_slab_thickness": ("grid", "min_slab_thickness", float),
    "slope_threshold": ("criteria", "slope_threshold", float),
    "fit_distance": ("criteria", "fit_distance", float),
    "horizontal_gap": ("criteria", "horizontal_gap", float),
    "density_jump": ("criteria", "density_jump", float),
    "height_step": ("criteria", "height_step", float),
    "angle_jump": ("criteria", "angle_jump", float),
    "min_jump_support": ("criteria", "min_jump_support", int),
    "deming_lambda": ("deming", "lam", float),
    "ground_threshold": (None, "ground_threshold", float),
    "outlier_iterations": (None, "outlier_iterations", int),
    "outlier_fraction": (None, "outlier_fraction", float),
    "outlier_residual": (None, "outlier_residual", str),
    "optimize_hyperparams": (None, "optimize_hyperparams", _bool),
    "pseudo_mode": (None, "pseudo_mode", str),
    "latent_sharing": (None, "latent_sharing", str),
    "clamp_min": (None, "clamp_min", float),
    "clamp_max": (None, "clamp_max", float),
    "opt_max_iter": (None, "opt_max_iter", int),
    "heldout_every": (None, "heldout_every", int),
    "threads": (None, "threads", int),
    "sigma_f": ("theta", "sigma_f", float),
    "sigma_n": ("theta", "sigma_n", float),
    "sigma_bar_f": ("theta", "sigma_bar_f", float),
    "sigma_bar_l": ("theta", "sigma_bar_l", float),
    "sigma_bar_n": ("theta", "sigma_bar_n", float),
}


def config_from_mapping(values: dict, base: SegmentationConfig | None = None) -> SegmentationConfig:
    """Build a config from flat ``key -> text`` pairs; unknown keys are errors."""
    base = base or SegmentationConfig()
    sections = {"grid": {}, "criteria": {}, "deming": {}, "theta": {}, None: {}}
    for key, text in values.items():
        if key not in _KEYS:
            raise ConfigError(f"unknown configuration key {key!r}")
        section, name, parse = _KEYS[key]
        try:
            sections[section][name] = parse(text) if isinstance(text, str) else text
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
    top = sections[None]
    lo, hi = base.clamp
    if "clamp_min" in top or "clamp_max" in top:
        top["clamp"] = (top.pop("clamp_min", lo), top.pop("clamp_max", hi))
    try:
        return dataclasses.replace(
            base,
            grid=dataclasses.replace(base.grid, **sections["grid"]),
            criteria=dataclasses.replace(base.criteria, **sections["criteria"]),
            deming=dataclasses.replace(base.deming, **sections["deming"]),
            theta=dataclasses.replace(base.theta, **sections["theta"]),
            **top,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> SegmentationConfig:
    """Parse a ``key = value`` file (``#`` comments, blank lines allowed)."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (t.strip() for t in text.split("=", 1))
            if key in values:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            values[key] = value
    return config_from_mapping(values)


def dump_config(config: SegmentationConfig, path) -> None:
    lines = []
    for key, (section, name, _) in _KEYS.items():
        if key == "clamp_min":
            value = config.clamp[0]
        elif key == "clamp_max":
            value = config.clamp[1]
        else:
            obj = config if section is None else getattr(config, section)
            value = getattr(obj, name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_theta(theta: HyperParams, path) -> None:
    data = {name: float(getattr(theta, name)) for name in
            ("sigma_f", "sigma_n", "sigma_bar_f", "sigma_bar_l", "sigma_bar_n")}
    data["log_lengthscales"] = [float(v) for v in theta.log_lengthscales]
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=1)
    os.replace(tmp, path)


def load_theta(path) -> HyperParams:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    try:
        return HyperParams(
            sigma_f=data["sigma_f"], sigma_n=data["sigma_n"],
            sigma_bar_f=data["sigma_bar_f"], sigma_bar_l=data["sigma_bar_l"],
            sigma_bar_n=data["sigma_bar_n"],
            log_lengthscales=np.asarray(data.get("log_lengthscales", []), dtype=float))
    except KeyError as exc:
        raise ConfigError(f"{path}: missing parameter {exc}") from None
