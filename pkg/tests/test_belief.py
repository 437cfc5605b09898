from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conav.belief import (INCOHERENT, NULL_OBSERVATION, Belief, SensorModel, ZoneLayout, observe,
                          reach_relation, update_belief, zone_of)
from conav.dynamics import HumanState, RobotState

LAYOUT = ZoneLayout.for_delta(3.0)
VOCAB = ("null", "north", "south", "east", "west")
PERFECT = SensorModel.compass(VOCAB, LAYOUT)
H = HumanState(0.0, 0.0)
COMPLETE = np.ones((9, 9), dtype=bool)
beliefs = st.lists(st.booleans(), min_size=9, max_size=9).map(lambda b: Belief(tuple(b)))
observations = st.sampled_from([NULL_OBSERVATION, "north", "south", "east", "west"])
reaches = st.lists(st.booleans(), min_size=81, max_size=81).map(lambda b: np.array(b).reshape(9, 9))


def test_zone_of_examples():
    assert zone_of(RobotState(0, 0), H, LAYOUT) == 4
    assert zone_of(RobotState(2.0, 0), H, LAYOUT) is None
    assert zone_of(RobotState(0, 1.0), H, LAYOUT) == 1
    assert LAYOUT.center_index == 4


def test_observe_examples():
    assert observe(H, "east", RobotState(1, 0), PERFECT) == "east"
    lateral = SensorModel.compass(VOCAB, LAYOUT, conflation=(("lateral", ("east", "west")),))
    assert observe(H, "west", RobotState(-1, 0), lateral) == "lateral"
    assert observe(H, "null", RobotState(5, 5), lateral) == NULL_OBSERVATION
    with pytest.raises(KeyError):
        observe(H, "up", RobotState(0, 0), PERFECT)


def test_sensor_output_is_incoherent_off_side():
    assert PERFECT.output("east", 5) == "east"
    assert PERFECT.output("east", 3) == INCOHERENT
    assert PERFECT.output("null", None) == NULL_OBSERVATION


def test_update_examples():
    post = update_belief(Belief.full(9), "east", H, LAYOUT, PERFECT, COMPLETE)
    assert post.indices == [2, 5, 8]
    prior = Belief.from_indices(9, [0, 4])
    assert update_belief(prior, NULL_OBSERVATION, H, LAYOUT, PERFECT, np.eye(9, dtype=bool)) == prior
    reach = np.eye(9, dtype=bool)
    reach[3] = False
    assert update_belief(Belief.from_indices(9, [3]), "west", H, LAYOUT, PERFECT, reach).is_empty


def test_empty_prior_with_null_stays_empty():
    assert update_belief(Belief.empty(9), NULL_OBSERVATION, H, LAYOUT, PERFECT, COMPLETE).is_empty


@settings(max_examples=300)
@given(beliefs, beliefs, observations, reaches)
def test_monotone_in_prior(a, b, obs, reach):
    lo = Belief(tuple(x and y for x, y in zip(a.bits, b.bits)))
    if lo.is_empty:
        return
    assert update_belief(lo, obs, H, LAYOUT, PERFECT, reach).issubset(
        update_belief(a, obs, H, LAYOUT, PERFECT, reach))


@settings(max_examples=200)
@given(beliefs, st.sampled_from(["north", "south", "east", "west"]))
def test_perfect_sensing_complete_reach_ignores_prior(prior, obs):
    if prior.is_empty:
        return
    post = update_belief(prior, obs, H, LAYOUT, PERFECT, COMPLETE)
    assert post == update_belief(Belief.full(9), obs, H, LAYOUT, PERFECT, COMPLETE)


def test_reach_relation_distance_and_free_mask():
    reach = reach_relation((0, 0), (0, 0), LAYOUT, 1.0)
    assert reach[4].sum() == 5            # centre reaches itself and its four neighbours
    free = np.ones(9, dtype=bool)
    free[2] = False
    masked = reach_relation((0, 0), (0, 0), LAYOUT, 10.0, (free, free))
    assert not masked[2].any() and not masked[:, 2].any()


def test_belief_helpers():
    b = Belief.from_indices(9, [1, 7])
    assert b.as_string() == "010000010"
    assert len(b) == 9 and not b.is_empty
    assert Belief.empty(9).issubset(b)
    with pytest.raises(KeyError):
        SensorModel.compass(VOCAB, LAYOUT, conflation=(("x", ("up",)),))
