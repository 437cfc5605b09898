"""Distance barrier function, CBF-filtered control and tube membership checks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ControlBounds, RobotControl, RobotState, TimedPlan


@dataclass(frozen=True)
class SafetyParams:
    epsilon_tube: float = 0.2
    r_h: float = 0.3
    r_r: float = 0.3
    alpha_gain: float = 1.0
    lookahead: float = 0.1

    def __post_init__(self):
        for name in ("epsilon_tube", "r_h", "r_r", "alpha_gain", "lookahead"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")

    @property
    def radius(self) -> float:
        return self.epsilon_tube + self.r_h + self.r_r

    @classmethod
    def from_scenario(cls, scn) -> "SafetyParams":
        return cls(scn.epsilon_tube, scn.r_h, scn.r_r, scn.alpha_gain, scn.lookahead)


@dataclass(frozen=True)
class PredictedHumanTube:
    """Predicted human centers on the planner's dt grid, starting at t0."""

    centers: np.ndarray
    radius: float
    t0: float = 0.0
    dt: float = 0.1

    def center_at(self, k: int) -> np.ndarray:
        return self.centers[min(k, len(self.centers) - 1)]

    def velocity_at(self, k: int) -> np.ndarray:
        if k + 1 >= len(self.centers):
            return np.zeros(2)
        return (self.centers[k + 1] - self.centers[k]) / self.dt


class InfeasibleQP(Exception):
    """CBF constraint cannot be met within the control box."""


def safety_value(s_r, s_h, params: SafetyParams) -> float:
    """B = |p_r - p_h|^2 - (eps + r_h + r_r)^2."""
    x, y = (s_r.x, s_r.y) if isinstance(s_r, RobotState) else (s_r[0], s_r[1])
    dx = x - float(s_h[0])
    dy = y - float(s_h[1])
    return dx * dx + dy * dy - params.radius ** 2


def safety_gradient(p, s_h) -> np.ndarray:
    """Gradient of B with respect to the robot position."""
    return 2.0 * (np.asarray(p, dtype=float) - np.asarray(s_h, dtype=float))


def lookahead_point(s: RobotState, ell: float) -> tuple[float, float]:
    return s.x + ell * math.cos(s.theta), s.y + ell * math.sin(s.theta)


def cbf_constraint(s_r: RobotState, tube_point, params: SafetyParams,
                   tube_velocity=(0.0, 0.0)) -> tuple[tuple[float, float], float]:
    """Return (g, c) such that the CBF condition reads g @ [v, omega] >= c.

    B is evaluated at the lookahead point so that both inputs appear in L_g B.
    A moving tube center contributes -dB/dp . h_dot to the drift side.
    """
    ell = params.lookahead
    c, s = math.cos(s_r.theta), math.sin(s_r.theta)
    px, py = s_r.x + ell * c, s_r.y + ell * s
    ex, ey = px - float(tube_point[0]), py - float(tube_point[1])
    b = ex * ex + ey * ey - params.radius ** 2
    g = (2.0 * (ex * c + ey * s), 2.0 * ell * (-ex * s + ey * c))
    drift = -2.0 * (ex * float(tube_velocity[0]) + ey * float(tube_velocity[1]))
    return g, -(params.alpha_gain * b + drift)


def _clip(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else (hi if x > hi else x)


def _project_qp(nominal, g, c: float, lo, hi) -> tuple[float, float]:
    """argmin |a - nominal|^2  s.t.  g @ a >= c, lo <= a <= hi (2 variables, exact)."""
    g0, g1 = float(g[0]), float(g[1])
    a0 = _clip(float(nominal[0]), lo[0], hi[0])
    a1 = _clip(float(nominal[1]), lo[1], hi[1])
    if g0 * a0 + g1 * a1 >= c:
        return a0, a1
    gg = g0 * g0 + g1 * g1
    if gg == 0.0:
        raise InfeasibleQP("constraint independent of control and violated")
    # constraint active: minimise over the segment {g @ a = c} ∩ box
    b0, b1 = g0 * c / gg, g1 * c / gg
    norm = math.sqrt(gg)
    d0, d1 = -g1 / norm, g0 / norm
    t_lo, t_hi = -math.inf, math.inf
    for base, d, l, h in ((b0, d0, lo[0], hi[0]), (b1, d1, lo[1], hi[1])):
        if abs(d) < 1e-15:
            if base < l - 1e-12 or base > h + 1e-12:
                raise InfeasibleQP("constraint line misses the control box")
            continue
        t1, t2 = (l - base) / d, (h - base) / d
        t_lo = max(t_lo, min(t1, t2))
        t_hi = min(t_hi, max(t1, t2))
    if t_lo > t_hi + 1e-12:
        raise InfeasibleQP("constraint line misses the control box")
    t = _clip(d0 * (float(nominal[0]) - b0) + d1 * (float(nominal[1]) - b1), t_lo, max(t_lo, t_hi))
    a0 = _clip(b0 + t * d0, lo[0], hi[0])
    a1 = _clip(b1 + t * d1, lo[1], hi[1])
    viol = c - (g0 * a0 + g1 * a1)
    if viol > 0:
        # rounding left us marginally infeasible: push along g, staying in the box
        a0 = _clip(a0 + g0 * viol / gg * (1 + 1e-9), lo[0], hi[0])
        a1 = _clip(a1 + g1 * viol / gg * (1 + 1e-9), lo[1], hi[1])
    return a0, a1


def safe_control(s_r: RobotState, nominal: RobotControl, tube_point, params: SafetyParams,
                 bounds: ControlBounds, tube_velocity=(0.0, 0.0)) -> RobotControl:
    """Minimally modify `nominal` so the linearised CBF condition holds.

    Raises InfeasibleQP when no control in the box satisfies it.
    """
    g, c = cbf_constraint(s_r, tube_point, params, tube_velocity)
    lo = (bounds.v_low, -bounds.omega_max)
    hi = (bounds.v_max, bounds.omega_max)
    v, w = _project_qp((nominal.v, nominal.omega), g, c, lo, hi)
    return RobotControl(v, w)


def plan_in_safe_set(plan: TimedPlan, tube: PredictedHumanTube) -> bool:
    """True iff every plan state keeps B >= 0 against the tube center at its step."""
    if abs(plan.dt - tube.dt) > 1e-12:
        raise ValueError("plan and tube use different dt")
    offset = (plan.t0 - tube.t0) / tube.dt
    k0 = int(round(offset))
    if abs(offset - k0) > 1e-6 or k0 < 0:
        raise ValueError("plan and tube time grids are misaligned")
    if k0 + len(plan.states) > len(tube.centers):
        raise ValueError("plan extends beyond the tube horizon")
    r2 = tube.radius ** 2
    for i, s in enumerate(plan.states):
        cx, cy = tube.centers[k0 + i]
        if (s.x - cx) ** 2 + (s.y - cy) ** 2 - r2 < 0:
            return False
    return True
