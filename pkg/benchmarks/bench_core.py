"""Time the per-segment objective: compiled core vs NumPy fallback.

    python3 benchmarks/bench_core.py [--repeat 200] [--frame]

``--frame`` also times one full optimization on a synthetic rough frame
with each backend.
"""

import argparse
import statistics
import time

import numpy as np

from gpground import _pycore

try:
    from gpground import _core
except ImportError:
    _core = None


def instance(rng, n, nb):
    r = np.sort(rng.uniform(1, 60, n))
    z = 0.05 * r + rng.normal(0, 0.05, n)
    z -= np.median(z)
    rbar = np.sort(rng.uniform(1, 60, nb))
    lbar = rng.uniform(0.0, 2.0, nb)
    theta = np.array([0.8, 0.1, 1.0, 5.0, 0.1])
    return r, z, rbar, lbar, theta


def bench(fn, args, repeat):
    fn(*args)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def bench_frame():
    from gpground.hyperopt import FrameData, HyperParams, OptimizeSchedule, SegmentData, optimize
    from gpground.grid_map import build_radial_grid
    from gpground.line_extraction import extract_line_segments
    from gpground.pipeline import SegmentationConfig, build_latent_layout
    from gpground.pseudo_input import select_pseudo_inputs
    from gpground.synth import rough_scene, synth_frame

    cfg = SegmentationConfig()
    pts, _ = synth_frame(rough_scene(0))
    grid = build_radial_grid(pts, cfg.grid)
    sets = {}
    for m, pg in enumerate(grid.candidates):
        if len(pg) >= 2:
            sets[m] = select_pseudo_inputs(extract_line_segments(pg), pg)
    lay = build_latent_layout(sets, cfg.grid)
    segs = []
    for m in sorted(sets):
        pg = grid.candidates[m]
        segs.append(SegmentData(pg.r, pg.z - np.median(pg.z), lay.rbar[m], lay.index[m], m))
    frame = FrameData(segs, lay.init.size)
    theta = HyperParams(log_lengthscales=lay.init)
    sch = OptimizeSchedule(max_iter=cfg.opt_max_iter)
    for name, core in (("cython", _core.segment_term if _core else None),
                       ("python", _pycore.segment_term)):
        if core is None:
            continue
        t0 = time.perf_counter()
        res = optimize(frame, theta, sch, core=core)
        print(f"frame optimization [{name}]: {time.perf_counter() - t0:.2f} s, "
              f"{res.evaluations} evaluations")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=200)
    p.add_argument("--frame", action="store_true")
    args = p.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'n':>4} {'nbar':>5} {'python us':>10} {'cython us':>10} {'speedup':>8}")
    for n, nb in ((10, 3), (30, 5), (60, 8), (120, 12)):
        a = instance(rng, n, nb)
        tp = bench(_pycore.segment_term, a, args.repeat)
        if _core is None:
            print(f"{n:4d} {nb:5d} {tp * 1e6:10.1f} {'n/a':>10}")
            continue
        tc = bench(_core.segment_term, a, args.repeat)
        print(f"{n:4d} {nb:5d} {tp * 1e6:10.1f} {tc * 1e6:10.1f} {tp / tc:8.2f}")
    if args.frame:
        bench_frame()


if __name__ == "__main__":
    main()
