from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conav.dynamics import ControlBounds, RobotControl, RobotState, TimedPlan, step_dynamics
from conav.safety import (PredictedHumanTube, SafetyParams, cbf_constraint, lookahead_point,
                          plan_in_safe_set, safe_control, safety_gradient, safety_value)

P = SafetyParams(epsilon_tube=0.1, r_h=0.3, r_r=0.3)
BOUNDS = ControlBounds(1.0, 1.5)


def test_safety_value_examples():
    assert safety_value(RobotState(1, 0, 0), (0, 0), P) == pytest.approx(0.51)
    assert safety_value(RobotState(0.7, 0, 0), (0, 0), P) == pytest.approx(0.0, abs=1e-12)
    assert safety_value(RobotState(0.5, 0, 0), (0, 0), P) == pytest.approx(-0.24)


def test_params_must_be_positive():
    with pytest.raises(ValueError):
        SafetyParams(epsilon_tube=0.0)


def test_inactive_constraint_returns_nominal():
    nominal = RobotControl(0.5, 0.2)
    assert safe_control(RobotState(0, 0, 0), nominal, (5, 5), P, BOUNDS) == nominal


def test_human_behind_robot_returns_nominal():
    s = RobotState(0, 0, 0)
    g, c = cbf_constraint(s, (-1.0, 0.0), P)
    assert g[0] > 0
    for v in (0.0, 0.5, 1.0):
        assert safe_control(s, RobotControl(v, 0.0), (-1.0, 0.0), P, BOUNDS) == RobotControl(v, 0.0)


def test_heading_at_human_on_boundary_is_slowed():
    s = RobotState(-P.radius - P.lookahead, 0.0, 0.0)       # lookahead point on the boundary
    a = safe_control(s, RobotControl(1.0, 0.0), (0.0, 0.0), P, BOUNDS)
    g, c = cbf_constraint(s, (0.0, 0.0), P)
    assert g[0] * a.v + g[1] * a.omega == pytest.approx(c, abs=1e-9)
    assert a.v < 1.0
    # dense enumeration of the control box agrees
    V, W = np.meshgrid(np.linspace(-1, 1, 2001), np.linspace(-1.5, 1.5, 3001), indexing="ij")
    ok = g[0] * V + g[1] * W >= c
    obj = np.where(ok, (V - 1.0) ** 2 + W ** 2, np.inf)
    i = np.unravel_index(np.argmin(obj), obj.shape)
    assert math.hypot(V[i] - a.v, W[i] - a.omega) < 2e-3


@settings(max_examples=100, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-math.pi, math.pi), st.floats(-1, 1),
       st.floats(-1.5, 1.5))
def test_safe_control_idempotent(x, y, th, v, w):
    s = RobotState(x, y, th)
    if safety_value(lookahead_point(s, P.lookahead), (0, 0), P) < 0:
        return
    a = safe_control(s, RobotControl(v, w), (0, 0), P, BOUNDS)
    assert safe_control(s, a, (0, 0), P, BOUNDS) == a
    assert BOUNDS.contains(a)


def test_forward_invariance_static_human():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        h = np.zeros(2)
        while True:
            s = RobotState(*rng.uniform(-3, 3, 2), rng.uniform(-math.pi, math.pi))
            if safety_value(lookahead_point(s, P.lookahead), h, P) >= 0:
                break
        for _ in range(1000):
            # nominal: drive straight at the human
            err = math.atan2(-s.y, -s.x) - s.theta
            err = (err + math.pi) % (2 * math.pi) - math.pi
            nominal = RobotControl(1.0, max(-1.5, min(1.5, 3 * err)))
            s = step_dynamics(s, safe_control(s, nominal, h, P, BOUNDS), 0.1)
            assert safety_value(lookahead_point(s, P.lookahead), h, P) >= 0


@settings(max_examples=100)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_gradient_matches_finite_differences(x, y, hx, hy):
    g = safety_gradient((x, y), (hx, hy))
    e = 1e-6
    fd = [(safety_value((x + e, y), (hx, hy), P) - safety_value((x - e, y), (hx, hy), P)) / (2 * e),
          (safety_value((x, y + e), (hx, hy), P) - safety_value((x, y - e), (hx, hy), P)) / (2 * e)]
    for a, b in zip(g, fd):
        assert a == pytest.approx(b, rel=1e-6, abs=1e-6)


def _plan(points) -> TimedPlan:
    states = tuple(RobotState(x, y, 0) for x, y in points)
    return TimedPlan(0.0, 0.1, states, tuple(RobotControl() for _ in states[1:]))


def test_plan_in_safe_set_examples():
    tube = PredictedHumanTube(np.zeros((5, 2)), 0.7, 0.0, 0.1)
    assert plan_in_safe_set(_plan([(2, 0)] * 3), tube)
    assert not plan_in_safe_set(_plan([(2, 0), (0.5, 0), (2, 0)]), tube)
    assert plan_in_safe_set(_plan([(0.7, 0)]), tube)


def test_plan_in_safe_set_rejects_misaligned_grids():
    tube = PredictedHumanTube(np.zeros((5, 2)), 0.7, 0.05, 0.1)
    with pytest.raises(ValueError):
        plan_in_safe_set(_plan([(2, 0)] * 2), tube)
    with pytest.raises(ValueError):
        plan_in_safe_set(_plan([(2, 0)] * 9), PredictedHumanTube(np.zeros((5, 2)), 0.7, 0.0, 0.1))
