import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gpground.grid_map import GroundCandidateSet
from gpground.line_extraction import LineParams, LineSegmentModel, extract_line_segments
from gpground.pseudo_input import (STRICTNESS_LEVELS, LatentTrainingSet, select_pseudo_inputs,
                                   strictness_fractions)


def candidates(r, z):
    n = len(r)
    return GroundCandidateSet(np.asarray(r, float), np.asarray(z, float), np.arange(n),
                              np.arange(n), np.full(n, 10.0))


def test_single_segment_endpoints_and_midpoint():
    pg = candidates(np.linspace(2, 10, 9), np.zeros(9))
    segs = extract_line_segments(pg)
    lat = select_pseudo_inputs(segs, pg)
    assert lat.locations.tolist() == [2.0, 6.0, 10.0]
    np.testing.assert_allclose(lat.log_lengthscales, np.log(8.0), rtol=1e-15)


def test_no_segments_falls_back_to_max_lengthscale():
    pg = candidates([4.0], [0.0])
    lat = select_pseudo_inputs([], pg, clamp=(0.3, 25.0))
    assert lat.locations.tolist() == [4.0]
    assert lat.log_lengthscales.tolist() == [np.log(25.0)]
    assert select_pseudo_inputs([], GroundCandidateSet.empty()).count == 0


def test_extent_is_clamped():
    pg = candidates(np.linspace(2, 60, 30), np.zeros(30))
    lat = select_pseudo_inputs(extract_line_segments(pg), pg, clamp=(0.3, 20.0))
    np.testing.assert_allclose(lat.log_lengthscales, np.log(20.0))
    with pytest.raises(ValueError):
        select_pseudo_inputs([], pg, clamp=(0.0, 1.0))


def test_steeper_shorter_segment_gets_smaller_lengthscale():
    r = np.linspace(2, 40, 60)
    k = 45
    z = np.where(np.arange(60) < k, 0.0, 0.5 * (r - r[k]))
    pg = candidates(r, z)
    segs = extract_line_segments(pg)
    assert len(segs) >= 2
    lat = select_pseudo_inputs(segs, pg, mode="midpoint")
    assert lat.log_lengthscales[-1] < lat.log_lengthscales[0]


def test_unknown_mode():
    with pytest.raises(ValueError, match="unknown pseudo-input mode"):
        strictness_fractions("everything")


def test_latent_set_validation():
    with pytest.raises(ValueError):
        LatentTrainingSet(np.zeros(2), np.zeros(3))


def staircase(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(10, 80))
    r = np.sort(rng.uniform(2, 60, n)) + 1e-3 * np.arange(n)
    z = np.floor(np.arange(n) / rng.integers(3, 12)) * 0.5
    return candidates(r, z)


@given(st.integers(0, 10_000))
def test_levels_are_nested_and_counts_decrease(seed):
    pg = staircase(seed)
    segs = extract_line_segments(pg)
    sets = [select_pseudo_inputs(segs, pg, mode=m) for m in STRICTNESS_LEVELS]
    counts = [s.count for s in sets]
    assert counts[0] >= counts[1] >= counts[2]
    assert counts[2] == len(segs)
    for strong, weak in zip(sets, sets[1:]):
        assert set(np.round(weak.locations, 9)) <= set(np.round(strong.locations, 9))


@given(st.integers(0, 10_000))
def test_locations_within_segment_spans_and_sorted(seed):
    pg = staircase(seed)
    segs = extract_line_segments(pg)
    for mode in STRICTNESS_LEVELS:
        lat = select_pseudo_inputs(segs, pg, mode=mode)
        assert np.all(np.diff(lat.locations) > 0)
        assert np.all(lat.locations >= pg.r.min()) and np.all(lat.locations <= pg.r.max())
        lo, hi = np.log(0.3), np.log(30.0)
        assert np.all((lat.log_lengthscales >= lo) & (lat.log_lengthscales <= hi))


def test_shared_boundary_keeps_smaller_value():
    pg = candidates(np.arange(2.0, 11.0), np.zeros(9))
    flat = LineParams.from_slope(0.0, 0.0)
    segs = [LineSegmentModel(0, 4, flat, 4.0, 10.0), LineSegmentModel(4, 8, flat, 2.0, 10.0)]
    lat = select_pseudo_inputs(segs, pg)
    assert lat.locations.tolist() == [2.0, 4.0, 6.0, 8.0, 10.0]
    np.testing.assert_allclose(lat.log_lengthscales, np.log([4.0, 4.0, 2.0, 2.0, 2.0]))
