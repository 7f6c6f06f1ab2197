import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from gpground.grid_map import GroundCandidateSet
from gpground.line_extraction import (CriticalPointCriteria, DemingConfig, LineParams,
                                      critical_points, deming_loglik, extract_line_segments,
                                      fit_line_deming, point_line_distance)


def closed_form_slope(r, z, lam):
    rm, zm = r.mean(), z.mean()
    srr = np.mean((r - rm) ** 2)
    szz = np.mean((z - zm) ** 2)
    srz = np.mean((r - rm) * (z - zm))
    D = szz - lam * srr
    return (D + math.sqrt(D * D + 4 * lam * srz * srz)) / (2 * srz)


def candidates(r, z, dens=None):
    n = len(r)
    dens = np.full(n, 10.0) if dens is None else dens
    return GroundCandidateSet(np.asarray(r, float), np.asarray(z, float), np.arange(n),
                              np.arange(n), np.asarray(dens, float))


def test_exact_line_through_three_points():
    line = fit_line_deming([0.0, 1.0, 2.0], [1.0, 2.0, 3.0])
    assert line.beta == pytest.approx(1.0, abs=1e-15)
    assert line.alpha == pytest.approx(1.0, abs=1e-15)
    assert line.a ** 2 + line.b ** 2 == pytest.approx(1.0, abs=1e-15)


def test_vertical_and_horizontal_lines():
    v = fit_line_deming([2.0, 2.0, 2.0], [0.0, 1.0, 3.0])
    assert v.vertical
    assert point_line_distance(2.0, 5.0, v) == pytest.approx(0.0, abs=1e-15)
    h = fit_line_deming([0.0, 1.0, 5.0], [0.7, 0.7, 0.7])
    assert h.beta == 0.0 and h.alpha == pytest.approx(0.7)


def test_underdetermined():
    with pytest.raises(ValueError):
        fit_line_deming([1.0], [2.0])
    with pytest.raises(ValueError):
        DemingConfig(lam=0.0)


@given(st.floats(-3, 3), st.floats(-2, 2), st.integers(2, 30), st.integers(0, 10_000))
def test_collinear_input_recovered(alpha, beta, n, seed):
    r = np.sort(np.random.default_rng(seed).uniform(0, 50, n))
    assume(r[-1] - r[0] > 1.0)
    line = fit_line_deming(r, alpha + beta * r)
    assert line.beta == pytest.approx(beta, abs=1e-9)
    assert np.max(point_line_distance(r, alpha + beta * r, line)) < 1e-9


@pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
def test_matches_closed_form_and_likelihood_grid(lam):
    rng = np.random.default_rng(int(lam * 10))
    t = rng.uniform(0, 40, 1000)
    r = t + rng.normal(0, 0.3, 1000)
    z = 0.5 + 0.2 * t + rng.normal(0, 0.3 * math.sqrt(lam), 1000)
    line = fit_line_deming(r, z, DemingConfig(lam))
    beta = closed_form_slope(r, z, lam)
    assert line.beta == pytest.approx(beta, abs=1e-10)
    assert line.alpha == pytest.approx(z.mean() - beta * r.mean(), abs=1e-10)
    grid = np.linspace(beta - 0.05, beta + 0.05, 2001)
    ll = [deming_loglik(z.mean() - b * r.mean(), b, r, z, lam) for b in grid]
    assert abs(grid[int(np.argmax(ll))] - line.beta) < 1e-3


def test_large_lambda_approaches_least_squares(rng):
    r = rng.uniform(0, 30, 500)
    z = 1.0 - 0.3 * r + rng.normal(0, 0.2, 500)
    ols = np.polyfit(r, z, 1)[0]
    assert fit_line_deming(r, z, DemingConfig(1e8)).beta == pytest.approx(ols, abs=1e-4)


@given(st.integers(0, 10_000), st.floats(-20, 20), st.floats(-5, 5))
def test_translation_equivariance_and_centroid(seed, dr, dz):
    rng = np.random.default_rng(seed)
    r = rng.uniform(0, 10, 20)
    z = 0.1 * r + rng.normal(0, 0.1, 20)
    a = fit_line_deming(r, z)
    b = fit_line_deming(r + dr, z + dz)
    assert b.beta == pytest.approx(a.beta, rel=1e-7, abs=1e-9)
    assert b.alpha == pytest.approx(a.alpha + dz - a.beta * dr, abs=1e-7)
    assert point_line_distance(r.mean(), z.mean(), a) < 1e-10


def test_point_line_distance():
    line = LineParams.from_slope(0.0, 1.0)
    assert point_line_distance(1.0, 0.0, line) == pytest.approx(math.sqrt(0.5))
    np.testing.assert_allclose(point_line_distance([0.0, 2.0], [0.0, 0.0], line),
                               [0.0, math.sqrt(2.0)])


def test_single_line_gives_one_segment():
    r = np.linspace(2, 30, 40)
    segs = extract_line_segments(candidates(r, 0.05 * r))
    assert len(segs) == 1
    assert (segs[0].start_index, segs[0].end_index) == (0, 39)
    assert segs[0].params.beta == pytest.approx(0.05)


def test_step_splits_in_two():
    r = np.linspace(2, 30, 40)
    z = np.where(np.arange(40) < 20, 0.0, 0.4)
    segs = extract_line_segments(candidates(r, z))
    assert [(s.start_index, s.end_index) for s in segs] == [(0, 19), (20, 39)]
    assert critical_points(segs) == [19]


def test_slope_change_is_piecewise_linear():
    r = np.linspace(2, 40, 60)
    k = 30
    z = np.where(np.arange(60) < k, 0.02 * r, 0.02 * r[k] + 0.1 * (r - r[k]))
    segs = extract_line_segments(candidates(r, z))
    assert len(segs) == 2
    assert abs(segs[0].end_index + 1 - k) <= 1
    assert segs[0].params.beta == pytest.approx(0.02, abs=0.01)
    assert segs[1].params.beta == pytest.approx(0.10, abs=0.01)


def test_gap_and_density_jump_cut():
    r = np.concatenate([np.linspace(2, 10, 10), np.linspace(25, 35, 10)])
    segs = extract_line_segments(candidates(r, np.zeros(20)))
    assert critical_points(segs) == [9]
    r = np.linspace(2, 30, 20)
    dens = np.where(np.arange(20) < 10, 10.0, 50.0)
    assert critical_points(extract_line_segments(candidates(r, np.zeros(20), dens))) == [9]


def test_degenerate_inputs():
    assert extract_line_segments(GroundCandidateSet.empty()) == []
    assert extract_line_segments(candidates([3.0], [0.0])) == []
    segs = extract_line_segments(candidates([3.0, 4.0], [0.0, 0.01]))
    assert len(segs) == 1


def test_isolated_point_is_merged():
    r = np.linspace(2, 30, 21)
    z = np.zeros(21)
    z[10] = 1.0  # an isolated spike cut on both sides
    segs = extract_line_segments(candidates(r, z))
    assert any(s.merged for s in segs)
    assert all(s.size >= 2 for s in segs)


@given(st.integers(0, 10_000))
def test_segments_partition_candidates(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 80))
    r = np.sort(rng.uniform(1, 60, n)) + np.arange(n) * 1e-3
    z = np.cumsum(rng.normal(0, 0.1, n))
    dens = rng.uniform(1, 30, n)
    segs = extract_line_segments(candidates(r, z, dens))
    covered = [i for s in segs for i in range(s.start_index, s.end_index + 1)]
    assert covered == list(range(n)) or n < 2
    for s in segs:
        assert s.size >= 2
        assert s.r_extent == pytest.approx(r[s.end_index] - r[s.start_index])


def test_criteria_validation():
    with pytest.raises(ValueError):
        CriticalPointCriteria(fit_distance=0.0)
    with pytest.raises(ValueError):
        CriticalPointCriteria(min_jump_support=1)
