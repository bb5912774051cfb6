import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import gap_map, step_map
from envaug.elevation_map import (
    DomainError,
    ElevationMap,
    HeightPatch,
    MapFormatError,
    SegmentationParams,
    apply_patch,
    dump_map,
    load_map,
    sample_height,
    segment_traversable,
)


def test_load_minimal_flat_map():
    m = load_map("resolution 0.04\n2 2\n0 0\n0 0\n")
    assert m.shape == (2, 2)
    assert m.resolution == 0.04
    assert np.all(m.heights == 0.0)


def test_row_length_mismatch_names_line():
    with pytest.raises(MapFormatError) as exc:
        load_map("resolution 0.04\n2 2\n0 0\n0 0 0\n")
    assert exc.value.line == 4


@pytest.mark.parametrize(
    "text, line",
    [
        ("res 0.04\n1 1\n0\n", 1),
        ("resolution x\n1 1\n0\n", 1),
        ("resolution 0.04\n1\n0\n", 2),
        ("resolution 0.04\n1 1\nabc\n", 3),
        ("resolution 0.04\n1 2\n0\n", 4),
    ],
)
def test_malformed_maps(text, line):
    with pytest.raises(MapFormatError) as exc:
        load_map(text)
    assert exc.value.line == line


def test_nan_round_trip_10x10():
    h = np.arange(100, dtype=float).reshape(10, 10) * 0.01
    h[2, 3] = h[7, 7] = h[0, 9] = np.nan
    text = dump_map(ElevationMap(0.04, h))
    m = load_map(text)
    assert np.isnan(m.heights[2, 3]) and np.isnan(m.heights[7, 7]) and np.isnan(m.heights[0, 9])
    known = ~np.isnan(h)
    assert np.array_equal(m.heights[known], h[known])
    assert dump_map(m) == text


finite = st.floats(min_value=0.0, max_value=5.0, allow_nan=False, allow_infinity=False)


@given(
    st.integers(1, 6),
    st.integers(1, 6),
    st.data(),
    st.sampled_from([0.01, 0.04, 0.05, 0.1]),
)
def test_round_trip_property(rows, cols, data, res):
    cells = data.draw(st.lists(st.one_of(finite, st.just(math.nan)), min_size=rows * cols, max_size=rows * cols))
    m = ElevationMap(res, np.array(cells).reshape(rows, cols))
    back = load_map(dump_map(m))
    assert back == m
    assert back.resolution == m.resolution


def test_sample_at_cell_centre():
    m = step_map()
    x, y = m.cell_center(3, 10)
    assert sample_height(m, x, y) == pytest.approx(0.16, abs=1e-12)


def test_sample_midpoint_between_cells():
    m = ElevationMap(0.04, np.array([[0.0, 0.16]]))
    assert sample_height(m, 0.04, 0.02) == pytest.approx(0.08, abs=1e-12)


def test_sample_unknown_neighbour():
    m = ElevationMap(0.04, np.array([[0.0, np.nan], [0.0, 0.0]]))
    assert sample_height(m, 0.04, 0.04) is None


def test_sample_outside_is_domain_error():
    with pytest.raises(DomainError):
        sample_height(step_map(), -0.5, 0.1)


def test_uniform_map_one_region():
    seg = segment_traversable(ElevationMap(0.04, np.zeros((5, 7))))
    assert len(seg.regions) == 1
    assert len(seg.regions[0].cells) == 35


def test_step_map_two_regions():
    seg = segment_traversable(step_map(), SegmentationParams(0.02))
    assert len(seg.regions) == 2
    assert seg.regions[0].mean_height == pytest.approx(0.0)
    assert seg.regions[1].mean_height == pytest.approx(0.16)


def test_gap_map_two_nonadjacent_regions():
    m = gap_map()
    seg = segment_traversable(m)
    assert len(seg.regions) == 2
    a, b = (r.cells for r in seg.regions)
    for r, c in a:
        for dr, dc in ((0, 1), (1, 0), (0, -1), (-1, 0)):
            assert (r + dr, c + dc) not in b
    for r in range(m.height):
        for c in range(10, 14):
            assert seg.cell_to_region(r, c) is None


def _flood_fill_oracle(h, tol):
    H, W = h.shape
    seen = -np.ones((H, W), dtype=int)
    comps = []
    for r in range(H):
        for c in range(W):
            if math.isnan(h[r, c]) or seen[r, c] >= 0:
                continue
            stack, cells = [(r, c)], set()
            seen[r, c] = len(comps)
            while stack:
                a, b = stack.pop()
                cells.add((a, b))
                for na, nb in ((a + 1, b), (a - 1, b), (a, b + 1), (a, b - 1)):
                    if 0 <= na < H and 0 <= nb < W and seen[na, nb] < 0 and not math.isnan(h[na, nb]):
                        if abs(h[na, nb] - h[a, b]) <= tol + 1e-9:
                            seen[na, nb] = len(comps)
                            stack.append((na, nb))
            comps.append(frozenset(cells))
    return set(comps)


height_grid = st.integers(2, 8).flatmap(
    lambda r: st.integers(2, 8).flatmap(
        lambda c: st.lists(
            st.one_of(st.integers(0, 6).map(lambda k: k * 0.04), st.just(math.nan)), min_size=r * c, max_size=r * c
        ).map(lambda v: np.array(v).reshape(r, c))
    )
)


@given(height_grid)
def test_segmentation_matches_flood_fill_and_partitions(h):
    m = ElevationMap(0.04, h)
    seg = segment_traversable(m, SegmentationParams(0.02))
    assert seg.partition() == _flood_fill_oracle(h, 0.02)
    seen = set()
    for reg in seg.regions:
        assert not (reg.cells & seen)
        seen |= reg.cells
        assert reg.mean_height == pytest.approx(np.mean([h[c] for c in reg.cells]), abs=1e-9)
        for cell in reg.cells:
            assert seg.cell_to_region(*cell) == reg.id
    for r in range(h.shape[0]):
        for c in range(h.shape[1]):
            if (r, c) not in seen:
                assert seg.cell_to_region(r, c) is None


@given(height_grid, st.sampled_from([0.5, 1.0, 3.25]))
def test_segmentation_height_offset_invariance(h, offset):
    a = segment_traversable(ElevationMap(0.04, h))
    b = segment_traversable(ElevationMap(0.04, h + offset))
    assert a.partition() == b.partition()


@given(height_grid)
def test_segmentation_rotation_equivariance(h):
    a = segment_traversable(ElevationMap(0.04, h))
    b = segment_traversable(ElevationMap(0.04, np.rot90(h)))
    W = h.shape[1]
    rotated = {frozenset((W - 1 - c, r) for r, c in cells) for cells in a.partition()}
    assert rotated == b.partition()


def test_min_region_cells_discards_small_components():
    h = np.zeros((4, 4))
    h[0, 0] = 1.0
    seg = segment_traversable(ElevationMap(0.04, h), SegmentationParams(0.02, 2))
    assert len(seg.regions) == 1
    assert seg.cell_to_region(0, 0) is None


def test_empty_patch_identity():
    m = step_map()
    assert apply_patch(m, HeightPatch.empty()) is m


def test_wedge_patch_profile():
    # a 45 degree wedge over two 0.04 m cells rises through cell-centre heights 0.02 and 0.06
    m = ElevationMap(0.04, np.zeros((1, 4)))
    profile = [(k + 0.5) * 0.04 for k in range(2)]
    out = apply_patch(m, HeightPatch(0, 1, np.array([profile])))
    assert out.heights[0].tolist() == pytest.approx([0.0, 0.02, 0.06, 0.0])


def test_bridge_patch_merges_regions():
    m = gap_map(rows=6)
    deck = np.full((2, 6), 0.30)
    out = apply_patch(m, HeightPatch(2, 9, deck))
    assert np.all(out.heights[2:4, 10:14] == 0.30)
    assert len(segment_traversable(out).regions) == 1
    assert np.isnan(m.heights[2, 10])


def test_patch_outside_extent():
    with pytest.raises(DomainError):
        apply_patch(step_map(), HeightPatch(11, 15, np.ones((2, 2))))


@given(height_grid, st.data())
def test_apply_patch_idempotent_and_pure(h, data):
    m = ElevationMap(0.04, h)
    r = data.draw(st.integers(0, h.shape[0] - 1))
    c = data.draw(st.integers(0, h.shape[1] - 1))
    ph = data.draw(st.integers(1, h.shape[0] - r))
    pw = data.draw(st.integers(1, h.shape[1] - c))
    vals = data.draw(st.lists(st.one_of(finite, st.just(math.nan)), min_size=ph * pw, max_size=ph * pw))
    patch = HeightPatch(r, c, np.array(vals).reshape(ph, pw))
    before = m.heights.copy()
    once = apply_patch(m, patch)
    assert apply_patch(once, patch) == once
    assert np.array_equal(m.heights, before, equal_nan=True)


def test_map_is_read_only():
    m = step_map()
    with pytest.raises(ValueError):
        m.heights[0, 0] = 3.0


def test_cell_lookup_convention():
    m = step_map(rows=4, cols=4)
    assert m.cell_at(0.0, 0.0) == (3, 0)
    assert m.cell_at(0.159, 0.159) == (0, 3)
    assert m.cell_at(0.04, 0.04) == (2, 1)
    assert m.cell_center(3, 0) == pytest.approx((0.02, 0.02))
