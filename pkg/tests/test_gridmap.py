import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mappohr.collision import Placement, check_static_collision, load_footprints
from mappohr.gridmap import (
    GridMap,
    MapFormatError,
    ScenarioError,
    edges,
    neighbors,
    parse_map,
    parse_scenario,
    serialize_map,
    serialize_scenario,
)
from mappohr.harness.suite import generate_map

LIB = load_footprints()


def map_text(rows):
    return f"type octile\nheight {len(rows)}\nwidth {len(rows[0])}\nmap\n" + "\n".join(rows) + "\n"


def test_parse_empty_3x3():
    g = parse_map(map_text(["...", "...", "..."]))
    assert (g.height, g.width) == (3, 3)
    assert len(g.obstacles) == 0 and len(g.free) == 9


def test_parse_center_obstacle():
    g = parse_map(map_text(["...", ".@.", "..."]))
    assert g.obstacles == {(1, 1)}
    assert len(g.free) == 8
    assert g.obstacles.isdisjoint(g.free)


def test_parse_large_generated_map():
    g = generate_map(np.random.default_rng(0), 111, 171, blocks=12)
    again = parse_map(serialize_map(g))
    assert (again.height, again.width) == (111, 171)
    assert again == g


@pytest.mark.parametrize(
    "text, line, column",
    [
        (map_text(["...", "..", "..."]), 6, 3),
        (map_text(["...", ".x.", "..."]), 6, 2),
        ("type octile\nheight 0\nwidth 3\nmap\n", None, None),
        ("type octile\nheight 2\nwidth 2\nmap\n..\n", 6, None),
    ],
)
def test_parse_errors_name_position(text, line, column):
    with pytest.raises(MapFormatError) as info:
        parse_map(text)
    assert info.value.line == line
    assert info.value.column == column


def test_parse_missing_header():
    with pytest.raises(MapFormatError, match="missing"):
        parse_map("type octile\nwidth 3\nmap\n...\n")


def test_neighbors_center_four_connected():
    g = GridMap(3, 3, frozenset())
    out = neighbors(g, (1, 1))
    assert len(out) == 4 and all(length == 1 for _, length in out)


def test_neighbors_center_eight_connected():
    g = GridMap(3, 3, frozenset())
    out = neighbors(g, (1, 1), connectivity=8)
    assert len(out) == 8
    assert sum(1 for _, length in out if length == pytest.approx(math.sqrt(2))) == 4


def test_neighbors_corner_and_errors():
    g = GridMap(3, 3, frozenset({(1, 1)}))
    assert len(neighbors(g, (0, 0))) == 2
    with pytest.raises(ValueError):
        neighbors(g, (1, 1))
    with pytest.raises(ValueError):
        neighbors(g, (3, 0))


@st.composite
def grids(draw):
    h = draw(st.integers(1, 8))
    w = draw(st.integers(1, 8))
    cells = draw(st.sets(st.tuples(st.integers(0, h - 1), st.integers(0, w - 1))))
    return GridMap(h, w, frozenset(cells))


@settings(max_examples=100, deadline=None)
@given(grids())
def test_map_roundtrip(g):
    text = serialize_map(g)
    assert parse_map(text) == g
    assert serialize_map(parse_map(text)).rstrip() == text.rstrip()


@settings(max_examples=100, deadline=None)
@given(grids(), st.sampled_from([4, 8]))
def test_neighbour_relation_symmetric_and_free(g, conn):
    es = edges(g, conn)
    pairs = {(e.source, e.target) for e in es}
    for e in es:
        assert e.source != e.target
        assert g.is_free(e.source) and g.is_free(e.target)
        assert (e.target, e.source) in pairs
        assert max(abs(e.source[0] - e.target[0]), abs(e.source[1] - e.target[1])) == 1


# ---------------------------------------------------------------- scenarios

OPEN = GridMap(12, 12, frozenset({(6, 6)}))


def test_parse_scenario_two_corridors():
    sc = parse_scenario("# two lanes\na unit 2 1 2 10\nb unit 9 1 9 10\n", OPEN)
    assert len(sc.agents) == 2
    assert sc.agents[0].start == (2, 1) and sc.agents[1].goal == (9, 10)
    assert sc.safety_distance == 0.0 and sc.step_limit == 60


def test_parse_scenario_directives_and_roundtrip():
    sc = parse_scenario("safety_distance 0.5\nstep_limit 40\na square3 3 3 9 9\n", OPEN, name="x")
    assert sc.safety_distance == 0.5 and sc.step_limit == 40
    again = parse_scenario(serialize_scenario(sc), OPEN, name="x")
    assert again == sc


def test_scenario_start_on_obstacle_lists_cells():
    with pytest.raises(ScenarioError) as info:
        parse_scenario("a square3 5 5 2 2\n", OPEN)
    assert (6, 6) in info.value.cells


@pytest.mark.parametrize(
    "text",
    ["a unit 1 1 2\n", "a nosuch 1 1 2 2\n", "a unit 1 1 2 2\na unit 3 3 4 4\n", "a unit x 1 2 2\n", ""],
)
def test_scenario_format_errors(text):
    with pytest.raises(ScenarioError):
        parse_scenario(text, OPEN)


def test_scenario_off_map_start():
    with pytest.raises(ScenarioError):
        parse_scenario("a square3 0 5 5 5\n", OPEN)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 11), st.integers(0, 11), st.sampled_from(["unit", "square3", "tug"]), st.sampled_from([0.0, 0.5, 1.0]))
def test_scenario_validation_agrees_with_collision_module(r, c, fp, d):
    text = f"safety_distance {d}\na {fp} {r} {c} 3 3\n"
    ok_goal = not check_static_collision(Placement(LIB[fp], (3, 3)), OPEN, d)
    expected = ok_goal and not check_static_collision(Placement(LIB[fp], (r, c)), OPEN, d)
    try:
        parse_scenario(text, OPEN)
        accepted = True
    except ScenarioError:
        accepted = False
    assert accepted == expected
