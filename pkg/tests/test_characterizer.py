import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import gap_map, step_map
from envaug.characterizer import (
    CandidatePose,
    NoMatch,
    characterize,
    count_candidates,
    direction,
    match_at,
    result_to_json,
    threshold,
)
from envaug.elevation_map import ElevationMap, SegmentationParams, segment_traversable
from envaug.oracle import oracle_characterize
from envaug.templates import Constant, FeatureTemplate

SEG = SegmentationParams(0.02, 1)


def constant_template(p, rows=2, cols=2, cell=0.04, name="const"):
    m = rows * cols
    return FeatureTemplate(name, cell, rows, cols, (Constant(p),) * m, tuple(range(cols)), tuple(range(m - cols, m)))


def run(emap, templates, alpha=0.95, **kw):
    return characterize(emap, segment_traversable(emap, SEG), templates, alpha, **kw)


def test_all_ones_scores_one():
    m = step_map()
    assert match_at(m, constant_template(1.0), CandidatePose(0.2, 0.2, 0.0), 0.0) == 1.0


def test_four_cells_at_alpha():
    m = step_map()
    score = match_at(m, constant_template(0.95), CandidatePose(0.2, 0.2, 0.0), 0.0)
    assert score == pytest.approx(0.81450625, abs=1e-15)


def test_match_outside_map_is_nomatch():
    m = step_map()
    out = match_at(m, constant_template(1.0, rows=6), CandidatePose(0.02, 0.02, 0.0), 0.0)
    assert isinstance(out, NoMatch) and not out


def test_ledge_score_matches_direct_product(templates):
    m = step_map()
    seg = segment_traversable(m, SEG)
    t = templates["ledge-h2"]
    pose = CandidatePose(*m.cell_center(5, 8), 0.0)
    score = match_at(m, t, pose, 0.0)
    expected = oracle_characterize(m, seg, [t], 0.5).features
    by_pose = {f.pose: f.score for f in expected}
    assert pose in by_pose
    assert score == pytest.approx(by_pose[pose], abs=1e-12)


def test_flat_map_has_no_features(templates):
    m = ElevationMap(0.04, np.zeros((12, 12)))
    assert len(run(m, [templates["ledge-h2"]])) == 0


def test_empty_template_list():
    assert len(run(step_map(), [])) == 0


def test_step_map_ledge_features_face_the_low_side(templates):
    m = step_map()
    seg = segment_traversable(m, SEG)
    low = seg.cell_to_region(0, 0)
    res = characterize(m, seg, [templates["ledge-h2"]], 0.95)
    assert len(res) > 0
    for f in res.features:
        assert f.region_pair[0] == low
        # the entry end points back toward lower x
        dx, _ = direction(f.pose.theta)
        assert dx > 0
    assert res.features == oracle_characterize(m, seg, [templates["ledge-h2"]], 0.95).features


def test_gap_template_spans_gap(templates):
    m = gap_map(gap=4)
    seg = segment_traversable(m, SEG)
    res = characterize(m, seg, [templates["gap"]], 0.95)
    assert len(res) > 0
    assert {frozenset(f.region_pair) for f in res.features} == {frozenset({0, 1})}
    assert res.features == oracle_characterize(m, seg, [templates["gap"]], 0.95).features


def test_output_sorted():
    res = run(step_map(), [constant_template(0.99, name="b"), constant_template(0.99, name="a")])
    keys = [f.sort_key() for f in res.features]
    assert keys == sorted(keys)
    assert res.features[0].template_name == "a"


@pytest.mark.parametrize(
    "shape, n_templates, expected",
    [((10, 10), 1, 800), ((20, 20), 2, 6400)],
)
def test_count_candidates(shape, n_templates, expected, templates):
    m = ElevationMap(0.04, np.zeros(shape))
    assert count_candidates(m, list(templates.values())[:n_templates]) == expected


def test_count_candidates_linear():
    a = ElevationMap(0.04, np.zeros((10, 10)))
    b = ElevationMap(0.04, np.zeros((10, 20)))
    assert count_candidates(b, [None]) == 2 * count_candidates(a, [None])


@pytest.mark.parametrize("m_cells", [(2, 2), (3, 2), (3, 4)])
def test_threshold_boundary(m_cells):
    rows, cols = m_cells
    alpha = 0.95
    at = run(step_map(), [constant_template(alpha, rows, cols)], alpha)
    above = run(step_map(), [constant_template(alpha + 0.001, rows, cols)], alpha)
    assert len(at) == 0
    assert len(above) > 0
    assert threshold(alpha, rows * cols) == math.prod([alpha] * (rows * cols))


def test_invalid_alpha():
    with pytest.raises(ValueError):
        run(step_map(), [constant_template(1.0)], 1.0)


def test_maxima_only_is_subset(templates):
    full = run(step_map(), [templates["ledge-h2"]])
    best = run(step_map(), [templates["ledge-h2"]], maxima_only=True)
    assert 0 < len(best) <= len(full)
    assert set(best.features) <= set(full.features)


# -- properties ----------------------------------------------------------------

maps = st.one_of(
    st.builds(
        lambda r, c, s, hi: step_map(rows=r, cols=c, split=s, high=hi),
        st.integers(6, 12),
        st.just(14),
        st.integers(4, 10),
        st.sampled_from([0.08, 0.16, 0.24]),
    ),
    st.builds(
        lambda r, g, hgt: gap_map(rows=r, left=7, gap=g, right=7, height=hgt),
        st.integers(5, 10),
        st.integers(2, 6),
        st.sampled_from([0.0, 0.30]),
    ),
)


@given(maps)
def test_determinism_and_thread_schedule(templates, emap):
    ts = list(templates.values())
    a = result_to_json(run(emap, ts))
    assert a == result_to_json(run(emap, ts))
    assert a == result_to_json(run(emap, ts, n_jobs=4))


@given(maps, st.sampled_from([0.5, 1.25, 7.0]))
def test_z_offset_invariance(templates, emap, offset):
    ts = list(templates.values())
    a = run(emap, ts).features
    b = run(ElevationMap(emap.resolution, emap.heights + offset), ts).features
    assert [(f.template_name, f.pose, f.region_pair) for f in a] == [(f.template_name, f.pose, f.region_pair) for f in b]
    for fa, fb in zip(a, b):
        assert fa.score == pytest.approx(fb.score, abs=1e-12)


@given(maps, st.sampled_from([0.9, 0.95]), st.sampled_from([0.96, 0.99]))
def test_alpha_monotonicity(templates, emap, lo, hi):
    ts = list(templates.values())
    assert set(run(emap, ts, hi).features) <= set(run(emap, ts, lo).features)


def _rotated_key(f, H, res, cells_of):
    x, y = f.pose.x, f.pose.y
    theta = (f.pose.theta + math.pi / 2) % (2 * math.pi)
    return (
        f.template_name,
        round(H * res - y, 9),
        round(x, 9),
        round(theta, 9),
        cells_of[f.region_pair[0]],
        cells_of[f.region_pair[1]],
    )


@given(maps)
def test_rotation_equivariance(templates, emap):
    ts = list(templates.values())
    H, W = emap.shape
    seg_a = segment_traversable(emap, SEG)
    rotated = ElevationMap(emap.resolution, np.rot90(emap.heights))
    seg_b = segment_traversable(rotated, SEG)
    cells_a = {r.id: frozenset((W - 1 - c, rr) for rr, c in r.cells) for r in seg_a.regions}
    cells_b = {r.id: frozenset(r.cells) for r in seg_b.regions}
    a = characterize(emap, seg_a, ts, 0.95)
    b = characterize(rotated, seg_b, ts, 0.95)
    ka = {_rotated_key(f, H, emap.resolution, cells_a): f.score for f in a.features}
    kb = {
        (f.template_name, round(f.pose.x, 9), round(f.pose.y, 9), round(f.pose.theta % (2 * math.pi), 9),
         cells_b[f.region_pair[0]], cells_b[f.region_pair[1]]): f.score
        for f in b.features
    }
    assert ka.keys() == kb.keys()
    for k in ka:
        assert ka[k] == pytest.approx(kb[k], abs=1e-12)
