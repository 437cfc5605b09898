"""Unicycle robot dynamics, plan containers and goal-set membership."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PLAN_REPLAY_TOL = 1e-9


def wrap_angle(theta: float) -> float:
    """Wrap an angle into [-pi, pi)."""
    wrapped = (theta + math.pi) % (2.0 * math.pi) - math.pi
    # float modulo can land exactly on +pi for tiny negative inputs
    if wrapped >= math.pi:
        wrapped -= 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class RobotState:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class RobotControl:
    v: float = 0.0
    omega: float = 0.0


@dataclass(frozen=True)
class ControlBounds:
    v_max: float = 1.0
    omega_max: float = 1.5
    v_min: float | None = None

    @property
    def v_low(self) -> float:
        return -self.v_max if self.v_min is None else self.v_min

    def contains(self, a: RobotControl, tol: float = 1e-12) -> bool:
        return (self.v_low - tol <= a.v <= self.v_max + tol
                and abs(a.omega) <= self.omega_max + tol)


@dataclass(frozen=True)
class HumanState:
    """Planar human position and velocity (meters, m/s)."""

    x: float
    y: float
    vx: float = 0.0
    vy: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def velocity(self) -> np.ndarray:
        return np.array([self.vx, self.vy])

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)


@dataclass(frozen=True)
class GoalDisk:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if not self.radius > 0:
            raise ValueError("goal radius must be > 0")

    def contains(self, p) -> bool:
        dx = float(p[0]) - self.center[0]
        dy = float(p[1]) - self.center[1]
        return dx * dx + dy * dy - self.radius * self.radius <= 0.0


class ControlBoundsError(ValueError):
    pass


def step_dynamics(s: RobotState, a: RobotControl, dt: float,
                  bounds: ControlBounds | None = None) -> RobotState:
    """Forward-Euler step of the unicycle model.

    Raises ControlBoundsError when `a` violates `bounds`; an out-of-range
    control reaching the integrator means the planner is broken.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if bounds is not None and not bounds.contains(a):
        raise ControlBoundsError(f"control {a} outside {bounds}")
    return RobotState(
        s.x + a.v * math.cos(s.theta) * dt,
        s.y + a.v * math.sin(s.theta) * dt,
        s.theta + a.omega * dt,
    )


def in_goal(s, g: GoalDisk) -> bool:
    if isinstance(s, RobotState):
        return g.contains((s.x, s.y))
    return g.contains(s)


@dataclass(frozen=True)
class TimedPlan:
    """States at t0, t0+dt, ... with the controls that connect them."""

    t0: float
    dt: float
    states: tuple[RobotState, ...]
    controls: tuple[RobotControl, ...]

    def __post_init__(self):
        if not self.states:
            raise ValueError("plan has no states")
        if len(self.controls) != len(self.states) - 1:
            raise ValueError("controls must align with state transitions")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    def __len__(self) -> int:
        return len(self.states)

    @property
    def times(self) -> list[float]:
        return [self.t0 + i * self.dt for i in range(len(self.states))]

    @property
    def start(self) -> RobotState:
        return self.states[0]

    @property
    def end(self) -> RobotState:
        return self.states[-1]

    def xy(self) -> np.ndarray:
        return np.array([[s.x, s.y] for s in self.states])

    def replay_error(self) -> float:
        """Max position error between recorded states and re-integrated controls."""
        s = self.states[0]
        err = 0.0
        for a, rec in zip(self.controls, self.states[1:]):
            s = step_dynamics(s, a, self.dt)
            err = max(err, math.hypot(s.x - rec.x, s.y - rec.y))
        return err


def discretize_plan(plan: TimedPlan, stride: int) -> np.ndarray:
    """Every `stride`-th position of the plan, always keeping both endpoints."""
    if plan is None or len(plan.states) == 0:
        raise ValueError("empty plan")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    n = len(plan.states)
    idx = list(range(0, n, stride))
    if idx[-1] != n - 1:
        idx.append(n - 1)
    return np.array([[plan.states[i].x, plan.states[i].y] for i in idx])
