import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import LineString, Point, Polygon, box

from mappohr.collision import (
    DetectionModel,
    GeometryError,
    OutOfBoundsError,
    Placement,
    PolygonModel,
    check_collision,
    check_static_collision,
    covered_cells,
    detection_cells,
    format_footprints,
    load_footprints,
    min_segment_distance,
    parse_footprints,
)
from mappohr.gridmap import GridMap

from oracles import random_convex, shapely_poly

LIB = load_footprints()
SQ1 = PolygonModel.rectangle(1, 1)
SQ3 = PolygonModel.rectangle(3, 3)


def raster_oracle(model, cell):
    poly = shapely_poly(model, cell)
    x0, y0, x1, y1 = poly.bounds
    out = set()
    for r in range(math.floor(y0) - 1, math.ceil(y1) + 2):
        for c in range(math.floor(x0) - 1, math.ceil(x1) + 2):
            if poly.intersection(box(c - 0.5, r - 0.5, c + 0.5, r + 0.5)).area > 1e-12:
                out.add((r, c))
    return out


# ---------------------------------------------------------------- models


def test_polygon_normalised_to_ccw():
    cw = PolygonModel(((0, 0), (0, 1), (1, 0)))
    assert cw.area > 0


@pytest.mark.parametrize(
    "verts",
    [((0, 0), (1, 0)), ((0, 0), (1, 0), (2, 0)), ((0, 0), (2, 0), (1, 1), (2, 2), (0, 2))],
)
def test_polygon_rejects_degenerate_or_concave(verts):
    with pytest.raises(GeometryError):
        PolygonModel(verts)


def test_footprint_library_roundtrip():
    again = parse_footprints(format_footprints(LIB))
    assert again == LIB


def test_footprint_library_errors():
    with pytest.raises(GeometryError, match="line 2"):
        parse_footprints("a 0,0; 1,0; 0,1\nb 0,0; 1\n")
    with pytest.raises(GeometryError, match="duplicate"):
        parse_footprints("a 0,0; 1,0; 0,1\na 0,0; 1,0; 0,1\n")


# ---------------------------------------------------------------- covered cells


def test_unit_square_covers_one_cell():
    assert covered_cells(SQ1, (5, 5)) == {(5, 5)}


def test_three_by_three_square_covers_nine_cells():
    cells = covered_cells(SQ3, (5, 5))
    assert cells == {(r, c) for r in range(4, 7) for c in range(4, 7)}
    assert cells == raster_oracle(SQ3, (5, 5))


def test_plane_outline_covers_23_cells():
    plane = LIB["plane"]
    x0, y0, x1, y1 = plane.bounds
    assert (x1 - x0, y1 - y0) == (6.0, 6.0)  # vertex span of a 7x7-cell outline
    cells = covered_cells(plane, (20, 20))
    assert len(cells) == 23
    rows = {r for r, _ in cells}
    cols = {c for _, c in cells}
    assert len(rows) == 7 and len(cols) == 7
    assert cells == raster_oracle(plane, (20, 20))


def test_covered_cells_out_of_bounds():
    with pytest.raises(OutOfBoundsError) as info:
        covered_cells(SQ3, (0, 5), shape=(10, 10))
    assert {(-1, 4), (-1, 5), (-1, 6)} == set(info.value.cells)


def test_covered_cells_matches_raster_oracle_on_random_polygons():
    rng = np.random.default_rng(7)
    for _ in range(60):
        model = random_convex(rng, max_extent=4.0)
        cell = (float(rng.integers(5, 15)) + rng.choice([0.0, 0.5]), float(rng.integers(5, 15)) + rng.choice([0.0, 0.5]))
        assert covered_cells(model, cell) == raster_oracle(model, cell)


# ---------------------------------------------------------------- segment distance


def test_min_segment_distance_examples():
    assert min_segment_distance(((0, 0), (2, 2)), ((0, 2), (2, 0))) == 0.0
    assert min_segment_distance(((0, 0), (1, 0)), ((0, 2), (1, 2))) == 2.0
    assert min_segment_distance(((0, 0), (0, 0)), ((3, 4), (3, 4))) == 5.0


def sampled_distance(a, b, k=10_000):
    t = np.linspace(0.0, 1.0, k)
    pa = np.outer(1 - t, a[0]) + np.outer(t, a[1])
    pb = np.outer(1 - t, b[0]) + np.outer(t, b[1])
    # exact point-to-segment distance from every sample of one segment to the other
    def to_seg(points, s):
        p0, p1 = np.asarray(s[0], float), np.asarray(s[1], float)
        d = p1 - p0
        L = d @ d
        u = np.clip(((points - p0) @ d) / L, 0, 1) if L > 0 else np.zeros(len(points))
        return np.linalg.norm(points - (p0 + u[:, None] * d), axis=1).min()

    return min(to_seg(pa, b), to_seg(pb, a))


def test_min_segment_distance_matches_sampling_oracle():
    rng = np.random.default_rng(3)
    for _ in range(200):
        a = tuple(map(tuple, rng.uniform(-5, 5, (2, 2))))
        b = tuple(map(tuple, rng.uniform(-5, 5, (2, 2))))
        exact = min_segment_distance(a, b)
        ref = LineString(a).distance(LineString(b))
        assert exact == pytest.approx(ref, abs=1e-9)
        if exact > 0:
            # sampling approaches the true minimum from above
            assert sampled_distance(a, b) == pytest.approx(exact, abs=1e-6)


# ---------------------------------------------------------------- pairwise collision


def test_identical_placements_collide():
    assert check_collision(Placement(SQ1, (3, 3)), Placement(SQ1, (3, 3)), 0.0)


def test_far_squares_do_not_collide():
    assert not check_collision(Placement(SQ1, (0, 0)), Placement(SQ1, (0, 10)), 1.0)


def test_half_cell_gap_within_safety_distance():
    p, q = Placement(SQ1, (0, 0)), Placement(SQ1, (0, 1.5))
    gap = min(min_segment_distance(a, b) for a in SQ1.edges(0, 0) for b in SQ1.edges(0, 1.5))
    assert gap == 0.5
    assert check_collision(p, q, 1.0)
    assert not check_collision(p, q, 0.5)


def test_touching_squares_at_zero_distance_are_clear():
    assert not check_collision(Placement(SQ1, (0, 0)), Placement(SQ1, (0, 1)), 0.0)
    assert check_collision(Placement(SQ1, (0, 0)), Placement(SQ1, (0, 1)), 1e-9)


def test_containment_counts_as_collision():
    big = PolygonModel.rectangle(9, 9)
    assert check_collision(Placement(big, (0, 0)), Placement(SQ1, (0, 0)), 0.0)
    assert check_collision(Placement(SQ1, (0, 0)), Placement(big, (0, 0)), 0.0)


def minkowski_oracle(p, q, d):
    """Offset ``p`` by ``d`` (rounded corners) and test overlap with ``q``'s interior."""
    if d == 0:
        return p.intersection(q).area > 1e-12
    grown = p.buffer(d, quad_segs=256)
    return grown.intersection(q).area > 1e-12 or p.distance(q) < d


def test_segment_predicate_matches_minkowski_oracle():
    rng = np.random.default_rng(11)
    agree = 0
    for _ in range(300):
        a, b = random_convex(rng, 3.0), random_convex(rng, 3.0)
        off = (float(rng.uniform(-5, 5)), float(rng.uniform(-5, 5)))
        d = float(rng.choice([0.0, 0.25, 0.5, 1.0]))
        pa, pb = shapely_poly(a, (0, 0)), shapely_poly(b, off)
        if abs(pa.distance(pb) - d) <= 1e-6:
            continue
        assert check_collision(Placement(a, (0, 0)), Placement(b, off), d) == minkowski_oracle(pa, pb, d)
        agree += 1
    assert agree > 250


# ---------------------------------------------------------------- detection model / static


def test_detection_model_vertices_sit_d_inside_expanded_boundary():
    dm = DetectionModel(LIB["plane"], 0.75)
    for v in LIB["plane"].vertices:
        assert dm.contains(v)
        assert dm.boundary_gap(v) == pytest.approx(0.75, abs=1e-9)


def test_detection_cells_grow_with_d():
    base = detection_cells(SQ1, (5, 5), 0.0)
    assert base == {(5, 5)}
    ring = {(r, c) for r in range(4, 7) for c in range(4, 7)}
    # the eight neighbours touch the outline, so any positive d reaches them
    assert detection_cells(SQ1, (5, 5), 1e-9) == ring
    assert detection_cells(SQ1, (5, 5), 0.5) == ring
    assert len(detection_cells(SQ1, (5, 5), 1.01)) == 21


def test_static_collision_open_field_and_wall():
    grid = GridMap(20, 20, frozenset({(10, 14)}))
    assert not check_static_collision(Placement(SQ3, (5, 5)), grid, 1.0)
    # square spans cols 9.5..12.5; obstacle square starts at col 13.5, gap 1.0
    assert not check_static_collision(Placement(SQ3, (10, 11)), grid, 1.0)
    assert check_static_collision(Placement(SQ3, (10, 11)), grid, 1.01)
    assert check_static_collision(Placement(SQ3, (10, 12)), grid, 0.5)


def test_plane_next_to_wall():
    plane = LIB["plane"]
    wall = frozenset((r, 30) for r in range(40))
    grid = GridMap(40, 40, wall)
    ref = shapely_poly(plane, (20, 26))
    gap = ref.distance(box(29.5, -0.5, 30.5, 39.5))
    assert 0 < gap < 1.0
    assert check_static_collision(Placement(plane, (20, 26)), grid, 1.0)
    assert not check_static_collision(Placement(plane, (20, 26)), grid, gap - 1e-6)


def test_map_edge_counts_as_obstacle():
    grid = GridMap(10, 10, frozenset())
    assert check_static_collision(Placement(SQ1, (0, 5)), grid, 0.5 + 1e-9)
    assert not check_static_collision(Placement(SQ1, (1, 5)), grid, 0.5)


# ---------------------------------------------------------------- properties

coords = st.floats(-6, 6, allow_nan=False).map(lambda v: round(v * 2) / 2)
dists = st.sampled_from([0.0, 0.3, 0.5, 1.0, 1.7])
models = st.sampled_from([SQ1, SQ3, LIB["tug"], LIB["plane"], PolygonModel(((0, -1), (1.5, 1), (-1, 0.5)))])


@settings(max_examples=200, deadline=None)
@given(models, models, coords, coords, dists)
def test_collision_symmetric(a, b, r, c, d):
    assert check_collision(Placement(a, (0, 0)), Placement(b, (r, c)), d) == check_collision(
        Placement(b, (r, c)), Placement(a, (0, 0)), d
    )


@settings(max_examples=200, deadline=None)
@given(models, models, coords, coords, dists, dists)
def test_collision_monotone_in_d(a, b, r, c, d1, d2):
    lo, hi = sorted((d1, d2))
    if check_collision(Placement(a, (0, 0)), Placement(b, (r, c)), lo):
        assert check_collision(Placement(a, (0, 0)), Placement(b, (r, c)), hi)


@settings(max_examples=200, deadline=None)
@given(models, models, coords, coords, st.integers(-20, 20), st.integers(-20, 20))
def test_collision_translation_invariant(a, b, r, c, tr, tc):
    base = check_collision(Placement(a, (0, 0)), Placement(b, (r, c)), 0.5)
    assert check_collision(Placement(a, (tr, tc)), Placement(b, (r + tr, c + tc)), 0.5) == base


@settings(max_examples=150, deadline=None)
@given(models, models, coords, coords)
def test_zero_distance_matches_convex_intersection(a, b, r, c):
    pa, pb = shapely_poly(a, (0, 0)), shapely_poly(b, (r, c))
    expected = pa.intersection(pb).area > 1e-12
    assert check_collision(Placement(a, (0, 0)), Placement(b, (r, c)), 0.0) == expected
