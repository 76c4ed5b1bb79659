from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mapless_nav.priors import default_priors
from mapless_nav.world import distance_to_nearest_target, dumps_world
from mapless_nav.worldgen import GeneratorParams, InfeasibleParams, generate_world


def test_same_seed_same_bytes():
    p = GeneratorParams()
    assert dumps_world(generate_world(7, p)) == dumps_world(generate_world(7, p))


def test_different_seeds_differ():
    assert dumps_world(generate_world(1)) != dumps_world(generate_world(2))


def test_zero_rooms_rejected():
    with pytest.raises(InfeasibleParams):
        generate_world(0, GeneratorParams(rooms=0))


def test_rooms_that_do_not_fit_rejected():
    with pytest.raises(InfeasibleParams):
        generate_world(0, GeneratorParams(width=12, height=12, rooms=9))


@pytest.mark.parametrize("seed", range(6))
def test_deceptive_living_room_without_sofa(seed):
    w = generate_world(seed, GeneratorParams(deceptive=True, target="sofa"))
    start_room = w.room_at(w.start.cell())
    assert start_room.room_type == "living_room"
    in_start = {o.category for o in w.objects if o.room_id == start_room.id}
    assert {"table", "chair"} <= in_start
    assert "sofa" not in in_start
    sofas = w.instances("sofa")
    assert sofas and all(o.room_id != start_room.id for o in sofas)
    # the room holding the sofa looks less likely than the decoy
    host = w.rooms[sofas[0].room_id]
    priors = default_priors()
    assert priors(host.room_type, "sofa") < priors("living_room", "sofa")


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000), rooms=st.integers(1, 6), deceptive=st.booleans())
def test_generated_worlds_are_valid(seed, rooms, deceptive):
    p = GeneratorParams(rooms=rooms, deceptive=deceptive and rooms >= 2, target="sofa" if deceptive else None)
    w = generate_world(seed, p)  # validates all invariants on construction
    assert len(w.rooms) == rooms
    assert distance_to_nearest_target(w, w.start, w.target_category) > 0


def test_params_round_trip():
    p = GeneratorParams(width=30, deceptive=True, target="sofa")
    assert GeneratorParams.from_dict(p.to_dict()) == p
