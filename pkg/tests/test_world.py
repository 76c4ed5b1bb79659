from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mapless_nav.world import (
    Action,
    ContractViolation,
    InvalidWorld,
    Pose,
    Unreachable,
    distance_to_nearest_target,
    dumps_world,
    loads_world,
    shortest_path_length,
    step,
    world_from_ascii,
)
from oracles import bfs_hops


def random_grid(rng: random.Random, w: int, h: int, density: float) -> list[str]:
    rows = []
    for y in range(h):
        if y in (0, h - 1):
            rows.append("#" * w)
        else:
            rows.append("#" + "".join("#" if rng.random() < density else "." for _ in range(w - 2)) + "#")
    return rows


def test_move_ahead_east_advances_one_cell():
    w = world_from_ascii(["#######", "#.....#", "#######"], target="x", objects=[("x", (5, 1))], start=(4, 1))
    pose, out = step(w, Pose(1.0, 0.25, 0), Action.MoveAhead)
    assert (pose.x, pose.y, pose.heading) == (1.25, 0.25, 0)
    assert out.moved and not out.blocked and not out.stopped


def test_turn_left_wraps_heading():
    w = world_from_ascii(["###", "#.#", "###"], target="x", objects=[("x", (1, 1))])
    pose, out = step(w, Pose(0.25, 0.25, 330), Action.TurnLeft)
    assert pose == Pose(0.25, 0.25, 0)
    assert not out.moved


def test_move_into_wall_is_blocked():
    w = world_from_ascii(["###", "#.#", "###"], target="x", objects=[("x", (1, 1))])
    start = Pose(0.25, 0.25, 90)
    pose, out = step(w, start, Action.MoveAhead)
    assert pose == start and out.blocked and not out.moved


def test_stop_and_look_actions():
    w = world_from_ascii(["###", "#.#", "###"], target="x", objects=[("x", (1, 1))])
    p = Pose(0.25, 0.25, 0, 0)
    assert step(w, p, Action.Stop) == (p, step(w, p, Action.Stop)[1])
    assert step(w, p, Action.Stop)[1].stopped
    up, _ = step(w, p, Action.LookUp)
    assert up.pitch == 30 and step(w, up, Action.LookUp)[0].pitch == 30
    down, _ = step(w, Pose(0.25, 0.25, 0, -30), Action.LookDown)
    assert down.pitch == -30


def test_six_actions_exactly():
    assert {a.value for a in Action} == {"Stop", "MoveAhead", "TurnLeft", "TurnRight", "LookUp", "LookDown"}


def test_off_grid_pose_is_contract_violation(corridor):
    with pytest.raises(ContractViolation):
        step(corridor, Pose(0.0, 0.0, 0), Action.MoveAhead)
    with pytest.raises(ContractViolation):
        step(corridor, Pose(0.25, 0.25, 45), Action.MoveAhead)


def test_shortest_path_examples(corridor):
    assert shortest_path_length(corridor, (3, 1), (3, 1)) == 0.0
    assert shortest_path_length(corridor, (1, 1), (5, 1)) == 1.0
    sealed = world_from_ascii(["#####", "#.#.#", "#####"], target="x", objects=[("x", (1, 1))])
    with pytest.raises(Unreachable):
        shortest_path_length(sealed, (1, 1), (3, 1))


def test_distance_to_nearest_target_minimum():
    row = "#" + "." * 22 + "#"
    w = world_from_ascii(["#" * 24, row, "#" * 24], target="cup", objects=[("cup", (9, 1)), ("cup", (21, 1))], start=(1, 1))
    # instances at 8 and 20 cells from the start; the nearer one counts
    assert distance_to_nearest_target(w, Pose.at((1, 1)), "cup") == 2.0
    assert distance_to_nearest_target(w, (9, 1), "cup") == 0.0
    with pytest.raises(InvalidWorld):
        distance_to_nearest_target(w, (1, 1), "sofa")


def test_detour_behind_wall():
    w = world_from_ascii(
        ["#######", "#..#..#", "#..#..#", "#.....#", "#######"],
        target="x",
        objects=[("x", (4, 1))],
        start=(2, 1),
    )
    assert distance_to_nearest_target(w, (2, 1), "x") == bfs_hops(w.grid, (2, 1), (4, 1)) * 0.25 == 1.5


def test_invariants_enforced():
    with pytest.raises(InvalidWorld):
        world_from_ascii(["###", "#.#", "#.."], target="x", objects=[("x", (1, 1))])  # open boundary
    with pytest.raises(InvalidWorld):
        world_from_ascii(["####", "#..#", "####"], target="x", objects=[("x", (0, 0))])  # object on wall


def test_world_file_round_trip_is_byte_exact(corridor):
    text = dumps_world(corridor)
    again = loads_world(text)
    assert dumps_world(again) == text
    assert again.digest() == corridor.digest()


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), actions=st.lists(st.sampled_from(list(Action)), max_size=60))
def test_agent_never_on_wall_and_path_bounds_geodesic(seed, actions):
    rng = random.Random(seed)
    rows = random_grid(rng, 12, 10, 0.25)
    rows[1] = "#" + "." + rows[1][2:]
    w = world_from_ascii(rows, target="x", objects=[("x", (1, 1))], start=(1, 1))
    pose, moves = w.start, 0
    for a in actions:
        nxt, out = step(w, pose, a)
        assert step(w, pose, a) == (nxt, out)  # pure
        assert not (out.moved and out.blocked)
        assert w.is_free(nxt.cell())
        moves += out.moved
        pose = nxt
    assert moves * 0.25 >= shortest_path_length(w, w.start.cell(), pose.cell())


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_dijkstra_matches_bfs_small(seed):
    rng = random.Random(seed)
    rows = random_grid(rng, rng.randint(4, 14), rng.randint(4, 14), 0.3)
    free = [(x, y) for y, r in enumerate(rows) for x, c in enumerate(r) if c == "."]
    if not free:
        return
    w = world_from_ascii(rows, target="x", objects=[("x", free[0])])
    for _ in range(30):
        a, b = rng.choice(free), rng.choice(free)
        hops = bfs_hops(w.grid, a, b)
        if hops is None:
            with pytest.raises(Unreachable):
                shortest_path_length(w, a, b)
        else:
            assert shortest_path_length(w, a, b) == hops * 0.25
            assert shortest_path_length(w, b, a) == hops * 0.25
