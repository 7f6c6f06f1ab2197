"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line shown in the terminal summary.  Criteria
that the implementation does not meet stay failing; see the README.
"""

import math
import time

import numpy as np
import pytest

from gpground.cli import main
from gpground.gp import predict_ground, predict_lengthscales
from gpground.grid_map import GroundCandidateSet
from gpground.hyperopt import FrameData, HyperParams, SegmentData, frame_objective, \
    segment_objective
from gpground.kernels import JITTER_START, NonStatKernelParams, SEKernelParams, \
    nonstat_matrix, se_matrix
from gpground.line_extraction import DemingConfig, critical_points, deming_loglik, \
    extract_line_segments, fit_line_deming
from gpground.metrics import class_stats
from gpground.pipeline import Label, SegmentationConfig, segment_frame
from gpground.pseudo_input import STRICTNESS_LEVELS, LatentTrainingSet
from gpground.synth import rough_scene, slope_scene, synth_frame

pytestmark = pytest.mark.acceptance

N_ROUGH = 20


# kernel correctness

def test_criterion_01_kernel(criterion):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst_sym = worst_eig = worst_se = 0.0
    for _ in range(100):
        r = rng.uniform(0, 60, 20)
        L = rng.uniform(0.1, 20, 20)
        sf2 = rng.uniform(0.1, 3)
        K = nonstat_matrix(r, L, r, L, sf2)
        worst_sym = max(worst_sym, float(np.max(np.abs(K - K.T))))
        worst_eig = min(worst_eig, float(np.linalg.eigvalsh(0.5 * (K + K.T)).min()))
        same = np.full(20, L[0])
        Ke = nonstat_matrix(r, same, r, same, sf2)
        Kse = se_matrix(r, r, SEKernelParams(sf2, L[0], 0.0))
        worst_se = max(worst_se, float(np.max(np.abs(Ke - Kse))))
    dt = time.perf_counter() - t0
    ok = worst_sym <= 1e-12 and worst_eig >= -1e-10 and worst_se <= 1e-12 and dt < 1.0
    criterion(1, ok, f"asym {worst_sym:.1e}, min eig {worst_eig:.1e}, "
                     f"SE gap {worst_se:.1e}, {dt:.2f} s")
    assert ok


# GP oracle equivalence

def _jittered(K):
    # the production Gram carries a relative jitter on its diagonal
    return K + JITTER_START * np.max(np.diag(K)) * np.eye(len(K))


def test_criterion_02_gp_oracle(criterion):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 26))
        r = np.sort(rng.uniform(0, 40, n))
        z = rng.normal(0, 0.3, n)
        Lt = rng.uniform(0.5, 8, n)
        q = rng.uniform(0, 40, 10)
        Lq = rng.uniform(0.5, 8, 10)
        sf2, sn2 = rng.uniform(0.3, 1.5), rng.uniform(0.01, 0.1)
        train = GroundCandidateSet(r, z, np.arange(n), np.arange(n), np.ones(n))
        post = predict_ground(train, Lt, Lq, NonStatKernelParams(sf2, sn2), q)
        Ai = np.linalg.inv(_jittered(nonstat_matrix(r, Lt, r, Lt, sf2) + sn2 * np.eye(n)))
        Ks = nonstat_matrix(q, Lq, r, Lt, sf2)
        mu = Ks @ Ai @ z
        var = sf2 - np.einsum("ij,jk,ik->i", Ks, Ai, Ks)
        worst = max(worst, np.max(np.abs(post.mean - mu)), np.max(np.abs(post.variance - var)))

        nb = int(rng.integers(1, 26))
        loc = np.sort(rng.uniform(0, 40, nb))
        val = rng.uniform(-1, 3, nb)
        p = SEKernelParams(rng.uniform(0.5, 2), rng.uniform(2, 10), rng.uniform(0.01, 0.1))
        out = predict_lengthscales(LatentTrainingSet(loc, val), p, q)
        Bi = np.linalg.inv(_jittered(se_matrix(loc, loc, p) + p.noise_variance * np.eye(nb)))
        Kq = se_matrix(q, loc, p)
        m = Kq @ Bi @ val
        v = p.signal_variance - np.einsum("ij,jk,ik->i", Kq, Bi, Kq)
        worst = max(worst, np.max(np.abs(out.latent_mean - m)),
                    np.max(np.abs(out.latent_variance - v)))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-10 and dt < 5.0
    criterion(2, ok, f"max deviation {worst:.1e}, {dt:.2f} s")
    assert ok


# gradient fidelity

def _random_frame(rng, segments=2):
    segs, off = [], 0
    for m in range(segments):
        n, nb = int(rng.integers(8, 25)), int(rng.integers(2, 5))
        r = np.sort(rng.uniform(1, 30, n))
        z = 0.03 * r + 0.1 * np.sin(r) + rng.normal(0, 0.03, n)
        z -= np.median(z)
        segs.append(SegmentData(r, z, np.sort(rng.uniform(1, 30, nb)),
                                np.arange(off, off + nb), m))
        off += nb
    theta = HyperParams(rng.uniform(0.4, 1.2), rng.uniform(0.05, 0.3), rng.uniform(0.5, 1.5),
                        rng.uniform(3, 10), rng.uniform(0.05, 0.3),
                        log_lengthscales=rng.uniform(0.0, 1.5, off))
    return FrameData(segs, off), theta


def test_criterion_03_gradient(criterion):
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    worst = 0.0
    h = 1e-5
    for _ in range(20):
        frame, theta = _random_frame(rng)
        g = frame_objective(frame, theta).gradient
        x = theta.to_vector()
        for k in range(x.size):
            xp, xm = x.copy(), x.copy()
            xp[k] += h
            xm[k] -= h
            num = (frame_objective(frame, HyperParams.from_vector(xp), False).value
                   - frame_objective(frame, HyperParams.from_vector(xm), False).value) / (2 * h)
            worst = max(worst, abs(g[k] - num) / max(abs(num), 1e-8))
    dt = time.perf_counter() - t0
    ok = worst < 1e-4 and dt < 30.0
    criterion(3, ok, f"max relative error {worst:.1e}, {dt:.2f} s")
    assert ok


# whole-frame additivity

def test_criterion_04_additivity(criterion):
    rng = np.random.default_rng(4)
    exact = True
    for _ in range(20):
        frame, theta = _random_frame(rng, 4)
        a = FrameData(frame.segments[:2], frame.n_latent)
        b = FrameData(frame.segments[2:], frame.n_latent)
        whole = frame_objective(a.concat(b), theta, want_grad=False).value
        parts = [segment_objective(s, theta, want_grad=False)[0] for s in frame.segments]
        exact &= whole == math.fsum(parts)
    criterion(4, exact, "bitwise equal over 20 frames" if exact else "mismatch")
    assert exact


# Deming regression

def test_criterion_05_deming(criterion):
    rng = np.random.default_rng(5)
    collinear = 0.0
    for alpha, beta in [(1.0, 2.0), (-0.5, 0.25), (3.0, -1.5), (0.0, 0.0)]:
        r = np.arange(10.0)
        z = alpha + beta * r
        line = fit_line_deming(r, z)
        collinear = max(collinear, abs(line.beta - beta), abs(line.alpha - alpha))
    closed = grid_gap = 0.0
    for lam in (0.5, 1.0, 4.0):
        t = rng.uniform(0, 50, 1000)
        r = t + rng.normal(0, 0.2, 1000)
        z = 1.0 + 0.3 * t + rng.normal(0, 0.2 * math.sqrt(lam), 1000)
        line = fit_line_deming(r, z, DemingConfig(lam))
        rm, zm = r.mean(), z.mean()
        srr, szz = np.mean((r - rm) ** 2), np.mean((z - zm) ** 2)
        srz = np.mean((r - rm) * (z - zm))
        D = szz - lam * srr
        b = (D + math.sqrt(D * D + 4 * lam * srz * srz)) / (2 * srz)
        closed = max(closed, abs(line.beta - b), abs(line.alpha - (zm - b * rm)))
        grid = np.linspace(b - 0.05, b + 0.05, 10001)
        ll = [deming_loglik(zm - g * rm, g, r, z, lam) for g in grid]
        grid_gap = max(grid_gap, abs(grid[int(np.argmax(ll))] - line.beta))
    r = rng.uniform(0, 30, 1000)
    z = 0.5 - 0.2 * r + rng.normal(0, 0.3, 1000)
    ols_gap = abs(fit_line_deming(r, z, DemingConfig(1e8)).beta - np.polyfit(r, z, 1)[0])
    ok = collinear == 0.0 and closed <= 1e-10 and grid_gap <= 1e-3 and ols_gap <= 1e-4
    criterion(5, ok, f"collinear {collinear:.1e}, closed form {closed:.1e}, "
                     f"grid {grid_gap:.1e}, vs OLS {ols_gap:.1e}")
    assert ok


# line extraction

def piecewise_profile(seed, noise=0.01):
    """Candidates with steps of 0.4 m and slope changes of 0.08 at known indices."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(40, 80))
    r = np.cumsum(rng.uniform(0.4, 0.8, n)) + 2.0
    changes, k = [], 8
    while True:
        k += int(rng.integers(10, 20))
        if k > n - 8:
            break
        changes.append(k)
    z = np.zeros(n)
    slope = float(rng.uniform(-0.05, 0.05))
    for i in range(1, n):
        z[i] = z[i - 1] + slope * (r[i] - r[i - 1])
        if i in changes:
            if rng.random() < 0.5:
                z[i] += 0.4 * rng.choice([-1, 1])
            else:
                slope += 0.08 * (-np.sign(slope) if abs(slope) > 0.04 else rng.choice([-1, 1]))
                z[i] = z[i - 1] + slope * (r[i] - r[i - 1])
    z += rng.normal(0, noise, n)
    pg = GroundCandidateSet(r, z, np.arange(n), np.arange(n), np.full(n, 10.0))
    return pg, changes


def test_criterion_06_line_extraction(criterion):
    missed = over_budget = spurious = 0
    for seed in range(100):
        pg, truth = piecewise_profile(seed)
        # a critical point is the first index of the new line-segment
        found = [e + 1 for e in critical_points(extract_line_segments(pg))]
        missed += sum(not any(abs(f - c) <= 1 for f in found) for c in truth)
        extra = sum(not any(abs(f - c) <= 1 for c in truth) for f in found)
        spurious += extra
        over_budget += extra * 50 > len(pg)
    ok = missed == 0 and over_budget == 0
    criterion(6, ok, f"missed {missed}, spurious {spurious}, "
                     f"trials over budget {over_budget}/100")
    assert ok


# end-to-end rough scenes, shared by criteria 7 and 8

@pytest.fixture(scope="module")
def rough_frames():
    return [synth_frame(rough_scene(seed)) for seed in range(N_ROUGH)]


@pytest.fixture(scope="module")
def level_runs(rough_frames):
    runs = {}
    for mode in STRICTNESS_LEVELS:
        cfg = SegmentationConfig(pseudo_mode=mode)
        runs[mode] = [segment_frame(pts, cfg) for pts, _ in rough_frames]
    return runs


def test_criterion_07_rough_scenes(criterion, rough_frames, level_runs):
    default = SegmentationConfig().pseudo_mode
    recalls, precisions, scores = [], [], []
    for (pts, truth), res in zip(rough_frames, level_runs[default]):
        recalls.append(class_stats(res.labels, truth, Label.GROUND).recall)
        precisions.append(class_stats(res.labels, truth, Label.OBSTACLE).precision)
        scores.append(res.smse)
    quality = min(recalls) >= 0.95 and min(precisions) >= 0.95
    fit = float(np.mean(scores)) <= 1e-3
    criterion(7, quality and fit,
              f"min ground recall {min(recalls):.4f}, min obstacle precision "
              f"{min(precisions):.4f}, mean held-out SMSE {np.mean(scores):.2e} "
              f"(max {max(scores):.2e})")
    assert quality, "recall/precision below 0.95"
    assert fit, f"held-out SMSE {np.mean(scores):.2e} above 1e-3"


def test_criterion_08_tradeoff(criterion, level_runs):
    nbar, times, scores = [], [], []
    for mode in STRICTNESS_LEVELS:
        runs = level_runs[mode]
        nbar.append(np.mean([sum(r.n_pseudo) / max(1, sum(c >= 2 for c in r.n_candidates))
                             for r in runs]))
        times.append(np.mean([r.timings["opt"] + r.timings["pred"] for r in runs]))
        scores.append(np.mean([r.smse for r in runs]))
    # the time budget applies at default settings
    totals = [r.timings["total"] for r in level_runs[SegmentationConfig().pseudo_mode]]
    fewer = nbar[0] > nbar[1] > nbar[2]
    faster = times[0] > times[1] > times[2]
    no_gain = scores[0] <= scores[1] <= scores[2]
    budget = max(totals) < 5.0
    ok = fewer and faster and no_gain and budget
    row = ", ".join(f"{m}: n {n:.1f} t {t:.2f}s smse {s:.2e}"
                    for m, n, t, s in zip(STRICTNESS_LEVELS, nbar, times, scores))
    criterion(8, ok, f"{row}; slowest default frame {max(totals):.2f} s")
    assert fewer and faster, "pseudo-input count or time not monotone"
    assert budget, "frame over 5 s"
    assert no_gain, "SMSE improved when weakening the knob"


# sloped terrain

def test_criterion_09_slope(criterion):
    pts, truth = synth_frame(slope_scene(7.0, seed=9))
    res = segment_frame(pts)
    rec = class_stats(res.labels, truth, Label.GROUND).recall
    ok = rec >= 0.98
    criterion(9, ok, f"ground recall {rec:.4f} on a 7 degree slope")
    assert ok


# determinism

def test_criterion_10_determinism(criterion, tmp_path):
    frame = tmp_path / "f.bin"
    assert main(["synth", "--preset", "rough", "--seed", "3", "--out", str(frame)]) == 0
    outs = []
    for k, threads in enumerate((1, 1, 8, 8)):
        out = tmp_path / f"labels{k}.txt"
        assert main(["segment", "--input", str(frame), "--out", str(out),
                     "--threads", str(threads)]) == 0
        outs.append(out.read_bytes())
    ok = all(o == outs[0] for o in outs)
    criterion(10, ok, "labels byte-identical for threads 1, 1, 8, 8" if ok else "labels differ")
    assert ok
