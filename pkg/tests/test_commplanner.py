from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from conav.belief import Belief
from conav.commplanner import (PlannerContext, SearchNode, clearance, node_cost, path_cost, plan_cycle,
                               run_episode)
from conav.dynamics import HumanState, RobotState
from conav.world import CostWeights, builtin_scenario


def _node(gr, gh, signal="null"):
    return SearchNode(RobotState(0, 0), HumanState(0, 0), signal, None, 0, Belief.empty(9),
                      np.asarray(gr, float), np.asarray(gh, float))


def test_path_cost_examples():
    assert path_cost([(0, 0), (3, 4)]) == 5
    assert path_cost([(1, 1)]) == 0
    assert path_cost([(0, 0), (1, 0), (1, 1)]) == 2
    with pytest.raises(ValueError):
        path_cost([])


def test_clearance_examples():
    a = [(0, 0), (1, 0), (2, 0)]
    assert clearance(a, [(0, 2), (1, 2), (2, 2)], 0.5) == pytest.approx(1.5)
    # cross the same point at different indices: closest aligned pair is 1 m apart
    g1 = [(-1, 0), (0, 0), (1, 0)]
    g2 = [(0, 2), (0, 1), (0, 0)]
    assert clearance(g1, g2, 0.5) == pytest.approx(0.5)
    assert clearance(a, [(5, 5), (1, 0)], 0.5) == 0.0


def test_node_cost_examples():
    w = CostWeights(1.5, 0.25, 3.0, 1.0, sigma_safe=1.0)
    # robot path 4 m, human path 6 m, clearance exactly 1
    n = _node([(0, 0), (4, 0)], [(0, 2), (6, 2)], "north")
    assert node_cost(n, w) == pytest.approx(6 + 1.5 + 3 + 1)
    assert math.isinf(node_cost(_node([(0, 0), (1, 0)], [(0, 0.5), (1, 0.5)]), w))
    w0 = CostWeights(1.5, 0.25, 0.0, 1.0, sigma_safe=1.0)
    assert math.isinf(node_cost(_node([(0, 0), (1, 0)], [(0, 0.5), (1, 0.5)]), w0))
    assert math.isinf(node_cost(_node([(0, 0)], np.zeros((0, 2))), w))


def test_weights_decide_between_detour_and_signal():
    # forward plan passes close to the human; a side branch plus a signal keeps far away
    forward = _node([(0, 0), (2, 0), (4, 0)], [(2, 1.3), (2, 1.3), (2, 1.3)])
    branch = _node([(0, 0), (1.5, 1.5), (4, 3), (6, 3)], [(2, -1.5), (2, -1.5), (2, -1.5)], "east")
    safety_first = CostWeights(0.1, 0.1, 10.0, 1.0, sigma_safe=1.0)
    speed_first = CostWeights(5.0, 0.1, 0.1, 1.0, sigma_safe=1.0)
    assert node_cost(branch, safety_first) < node_cost(forward, safety_first)
    assert node_cost(forward, speed_first) < node_cost(branch, speed_first)


def _ctx_rng(scn):
    return PlannerContext(scn), np.random.default_rng(0)


def test_open_map_far_human_selects_null():
    scn = builtin_scenario("basic")
    scn = replace(scn, human_start=HumanState(9.0, 9.0))
    ctx, rng = _ctx_rng(scn)
    dec = plan_cycle(scn.robot_start, scn.human_start, Belief.empty(9), None, scn, ctx, rng)
    assert dec.signal == "null" and not dec.fallback
    assert len(dec.branches) == len(dec.plans) * len(scn.comm_vocab)
    for i in range(len(dec.plans)):
        assert any(n.signal == "null" and n.plan_index == i for n in dec.branches)


def test_goal_reached_is_not_planned():
    scn = builtin_scenario("basic")
    ctx, rng = _ctx_rng(scn)
    with pytest.raises(ValueError):
        plan_cycle(RobotState(9.0, 5.0), scn.human_start, Belief.empty(9), None, scn, ctx, rng)


def test_start_in_goal_gives_empty_solution():
    scn = builtin_scenario("basic")
    scn = replace(scn, robot_start=RobotState(9.0, 5.0))
    ep = run_episode(scn, seed=0)
    assert ep.outcome == "GOAL" and ep.solution == [] and ep.pi == 0


def test_basic_episode_reaches_goal_with_few_cycles():
    ep = run_episode(builtin_scenario("basic"), seed=0)
    assert ep.outcome == "GOAL"
    assert ep.pi <= 10
    # consecutive plans chain exactly
    for (_, a), (_, b) in zip(ep.solution, ep.solution[1:]):
        assert a.end == b.start
    # every cycle either met the clearance at selection time or fell back
    assert all(c.theorem_ok for c in ep.cycles)
    # executed steps respect the tube barrier whenever the human stayed inside it
    assert all(s.barrier >= 0 or s.tube_breach for s in ep.steps[1:])


def test_baseline_never_signals():
    ep = run_episode(builtin_scenario("basic"), seed=1, baseline=True)
    assert all(c.signal == "null" for c in ep.cycles)
    assert all(s.belief == "0" * 9 for s in ep.steps)
