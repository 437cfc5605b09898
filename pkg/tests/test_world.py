from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conav.world import (MAPS_DIR, ScenarioSchemaError, ScenarioValidationError, astar, build_grid,
                         builtin_scenario, dump_scenario, load_scenario, octile, parse_scenario)

EMPTY = """conav-scn v1
map_id = empty
bounds = 0 0 10 10
robot_start = 1 1 0
robot_goal = 9 9 0.5
human_start = 9 1
human_goal = 1 9 0.5
"""


def _with(text: str, line: str) -> str:
    return text + line + "\n"


@pytest.mark.parametrize("name", ["basic", "hallway", "intersection"])
def test_shipped_maps_load(name):
    scn = builtin_scenario(name)
    assert scn.map_id == name


def test_hallway_has_two_wall_polygons():
    scn = load_scenario(MAPS_DIR / "hallway.scn")
    assert scn.map_id == "hallway"
    assert len(scn.obstacles) == 2


def test_loading_twice_is_identical():
    a = load_scenario(MAPS_DIR / "intersection.scn")
    b = load_scenario(MAPS_DIR / "intersection.scn")
    assert a == b and dump_scenario(a) == dump_scenario(b)


@pytest.mark.parametrize("name", ["basic", "hallway", "intersection"])
def test_dump_round_trip(name):
    scn = builtin_scenario(name)
    again = parse_scenario(dump_scenario(scn))
    assert again == scn
    assert dump_scenario(again) == dump_scenario(scn)


def test_p_plans_one_rejected():
    with pytest.raises(ScenarioValidationError, match="p_plans ≥ 2"):
        parse_scenario(_with(EMPTY, "p_plans = 1"))


def test_robot_start_inside_obstacle_rejected():
    text = _with(EMPTY, "obstacle = 0 0 3 0 3 3 0 3")
    with pytest.raises(ScenarioValidationError, match="robot_start"):
        parse_scenario(text)


def test_two_null_signals_rejected():
    with pytest.raises(ScenarioValidationError, match="null"):
        parse_scenario(_with(EMPTY, "comm_vocab = null north null"))


def test_schema_errors_name_the_line():
    with pytest.raises(ScenarioSchemaError, match="line 1"):
        parse_scenario("not-a-header\n")
    with pytest.raises(ScenarioSchemaError, match="line 8: field 'dt'"):
        parse_scenario(_with(EMPTY, "dt = fast"))
    with pytest.raises(ScenarioSchemaError, match="unknown field"):
        parse_scenario(_with(EMPTY, "colour = red"))
    with pytest.raises(ScenarioSchemaError, match="missing required field 'human_goal'"):
        parse_scenario(EMPTY.replace("human_goal = 1 9 0.5\n", ""))


def test_conflation_and_comm_costs_parse():
    text = EMPTY + "conflation = lateral : east west\ncomm_cost.north = 2.5\n"
    scn = parse_scenario(text)
    assert scn.conflation == (("lateral", ("east", "west")),)
    assert scn.weights.comm_cost("north") == 2.5
    assert scn.weights.comm_cost("null") == 0.0


def test_point_in_freespace_examples():
    scn = builtin_scenario("hallway")
    assert scn.point_in_freespace((3.0, 1.0), 0.3)
    assert not scn.point_in_freespace((5.0, 2.0), 0.0)          # obstacle vertex
    assert not scn.point_in_freespace((3.0, 1.71), 0.3)         # 0.29 from the wall
    assert scn.point_in_freespace((3.0, 1.69), 0.3)


def test_empty_map_grid_all_free():
    scn = parse_scenario(EMPTY)
    grid = build_grid(scn, cell_size=0.5, inflation=0.0)
    assert grid.shape == (20, 20)
    assert not grid.occupancy.any()


def test_fully_covered_map_all_occupied():
    scn = parse_scenario(_with(EMPTY, "obstacle = -1 -1 11 -1 11 11 -1 11"), validate=False)
    grid = build_grid(scn, cell_size=0.5)
    assert grid.occupancy.all()


def test_cell_larger_than_map_rejected():
    with pytest.raises(ValueError):
        build_grid(parse_scenario(EMPTY), cell_size=20.0)


@pytest.mark.parametrize("name", ["basic", "hallway", "intersection"])
def test_grid_matches_freespace_at_centers(name):
    scn = builtin_scenario(name)
    grid = build_grid(scn, cell_size=0.25)
    centers = grid.cell_centers().reshape(-1, 2)
    expect = np.array([scn.point_in_freespace(c, scn.r_h) for c in centers]).reshape(grid.shape)
    assert np.array_equal(~grid.occupancy, expect)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 12.0), st.floats(0.0, 7.0))
def test_world_cell_round_trip(x, y):
    grid = build_grid(builtin_scenario("hallway"))
    c = grid.cell_to_world(grid.world_to_cell((x, y)))
    assert abs(c[0] - x) <= grid.cell_size / 2 + 1e-9
    assert abs(c[1] - y) <= grid.cell_size / 2 + 1e-9


def _dijkstra_length(grid, a, b):
    import heapq
    import math
    from conav.world import _neighbors
    dist = {a: 0.0}
    heap = [(0.0, a)]
    while heap:
        d, cur = heapq.heappop(heap)
        if cur == b:
            return d
        if d > dist[cur]:
            continue
        for nr, nc, w in _neighbors(grid.occupancy, *cur):
            if d + w < dist.get((nr, nc), math.inf):
                dist[(nr, nc)] = d + w
                heapq.heappush(heap, (d + w, (nr, nc)))
    return math.inf


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_astar_is_optimal(seed):
    rng = np.random.default_rng(seed)
    scn = builtin_scenario("intersection")
    grid = build_grid(scn, cell_size=0.5)
    free = np.argwhere(~grid.occupancy)
    a, b = (tuple(int(v) for v in free[i]) for i in rng.choice(len(free), 2, replace=False))
    path = astar(grid, a, b)
    assert path[0] == a and path[-1] == b
    length = sum(octile(p, q) for p, q in zip(path, path[1:]))
    assert length == pytest.approx(_dijkstra_length(grid, a, b), abs=1e-9)
