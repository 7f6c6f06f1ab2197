"""Command-line front end: ``gpground segment | synth | eval``.

Exit codes: 0 success, 1 I/O failure, 2 bad configuration or input
contract, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .io import (FORMATS, ConfigError, FrameFormatError, load_config, load_theta, read_frame,
                 read_labels, save_theta, write_frame, write_labels, write_profiles)
from .kernels import IllConditionedError
from .metrics import class_stats
from .pipeline import Label, LabeledFrame, SegmentationConfig, segment_frame
from .synth import SceneError, flat_scene, load_scene, rough_scene, slope_scene, synth_frame

log = logging.getLogger("gpground")

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
REPORT_HEADER = ("frame", "n_points", "n_candidates", "n_pseudo", "smse",
                 "t_grid", "t_line", "t_opt", "t_pred", "t_total")


def _config(args) -> SegmentationConfig:
    cfg = load_config(args.config) if args.config else SegmentationConfig()
    changes = {}
    if getattr(args, "optimize", None) is not None:
        changes["optimize_hyperparams"] = args.optimize
    if getattr(args, "threads", None) is not None:
        changes["threads"] = args.threads
    theta_path = getattr(args, "theta", None)
    if theta_path and Path(theta_path).exists():
        changes["theta"] = load_theta(theta_path)
    try:
        return dataclasses.replace(cfg, **changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def report_row(name, result: LabeledFrame) -> dict:
    t = result.timings
    return {
        "frame": name,
        "n_points": int(result.labels.size),
        "n_candidates": int(sum(result.n_candidates)),
        "n_pseudo": int(sum(result.n_pseudo)),
        "smse": f"{result.smse:.9g}",
        "t_grid": f"{t['grid']:.6f}",
        "t_line": f"{t['line']:.6f}",
        "t_opt": f"{t['opt']:.6f}",
        "t_pred": f"{t['pred']:.6f}",
        "t_total": f"{t['total']:.6f}",
    }


def write_report(rows, path) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_HEADER)
        w.writeheader()
        w.writerows(rows)


def cmd_segment(args) -> int:
    cfg = _config(args)
    frame = read_frame(args.input, args.format)
    result = segment_frame(frame, cfg)
    write_labels(result, args.out)
    if args.profile_out:
        write_profiles(result.profiles, args.profile_out)
    if args.theta:
        save_theta(result.theta, args.theta)
    if args.report:
        write_report([report_row(Path(args.input).name, result)], args.report)
    n_ground = int(np.count_nonzero(result.labels == Label.GROUND))
    log.info("%s: %d points, %d ground, smse %.3g, %.3f s", args.input,
             result.labels.size, n_ground, result.smse, result.timings["total"])
    return EXIT_OK


def _scene(args):
    if args.preset == "flat":
        spec = flat_scene(args.seed or 0)
    elif args.preset == "slope":
        spec = slope_scene(args.angle, seed=args.seed or 0)
    elif args.preset == "rough":
        spec = rough_scene(args.seed or 0)
    elif args.spec:
        spec = load_scene(args.spec)
        if args.seed is not None:
            spec = dataclasses.replace(spec, seed=args.seed)
    else:
        raise ConfigError("a scene spec file or --preset is required")
    return spec


def cmd_synth(args) -> int:
    spec = _scene(args)
    frame, truth = synth_frame(spec)
    write_frame(args.out, frame, args.format)
    if args.truth:
        write_labels(truth, args.truth)
    log.info("wrote %d points (%d obstacle) to %s", len(frame),
             int(np.count_nonzero(truth == Label.OBSTACLE)), args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    pred = read_labels(args.pred)
    truth = read_labels(args.truth)
    if pred.size != truth.size:
        raise ConfigError(f"label length mismatch: {pred.size} predicted vs {truth.size} truth")
    stats = class_stats(pred, truth, Label.GROUND)
    out = {"precision": stats.precision, "recall": stats.recall, "f1": stats.f1,
           "tp": stats.tp, "fp": stats.fp, "fn": stats.fn, "tn": stats.tn}
    if args.input:
        cfg = _config(args)
        frame = read_frame(args.input, args.format)
        if len(frame) != truth.size:
            raise ConfigError(f"frame has {len(frame)} points, labels have {truth.size}")
        totals, scores = [], []
        for _ in range(max(1, args.repeat)):
            res = segment_frame(frame, cfg)
            totals.append(res.timings["total"])
            scores.append(res.smse)
        out["smse"] = scores[-1]
        out["t_mean"] = float(np.mean(totals))
        out["t_std"] = float(np.std(totals))
        out["repeat"] = len(totals)
    for key, value in out.items():
        print(f"{key}: {value:.6g}" if isinstance(value, float) else f"{key}: {value}")
    if args.json:
        Path(args.json).write_text(json.dumps(out, indent=1) + "\n", encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gpground", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    verbose = argparse.ArgumentParser(add_help=False)
    verbose.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    def common(sp):
        sp.add_argument("--format", choices=FORMATS, default="kitti-bin")
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--optimize", action=argparse.BooleanOptionalAction, default=None,
                        help="learn hyperparameters on the frame (config default: on)")
        sp.add_argument("--theta", help="hyperparameter JSON: loaded if present, "
                                        "overwritten with the final values")

    s = sub.add_parser("segment", parents=[verbose], help="label the points of one frame")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True, help="label file, one digit per point")
    s.add_argument("--profile-out", help="CSV of per-segment ground profiles")
    s.add_argument("--report", help="per-frame timing/SMSE CSV")
    common(s)
    s.set_defaults(func=cmd_segment)

    y = sub.add_parser("synth", parents=[verbose],
                       help="generate a synthetic frame with truth labels")
    y.add_argument("spec", nargs="?", help="scene description (JSON)")
    y.add_argument("--preset", choices=("flat", "slope", "rough"))
    y.add_argument("--angle", type=float, default=7.0, help="slope preset angle, degrees")
    y.add_argument("--seed", type=int, default=None)
    y.add_argument("--out", required=True)
    y.add_argument("--truth", help="truth label file")
    y.add_argument("--format", choices=FORMATS, default="kitti-bin")
    y.set_defaults(func=cmd_synth)

    e = sub.add_parser("eval", parents=[verbose], help="score predicted labels against truth")
    e.add_argument("--pred", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--input", help="frame to re-segment for SMSE and timing")
    e.add_argument("--repeat", type=int, default=10)
    e.add_argument("--json", help="also write the metrics as JSON")
    common(e)
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, SceneError) as exc:
        print(f"gpground: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IllConditionedError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"gpground: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, FrameFormatError) as exc:
        print(f"gpground: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
