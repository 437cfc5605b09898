"""Human prediction (DWA rollout, grid A*) and the social-forces execution model."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .dynamics import GoalDisk, HumanState
from .world import (GridAbstraction, Scenario, astar, distance_field, grid_path_world,
                    nearest_free_cell, resample_polyline)

__all__ = [
    "HumanState", "HumanPrediction", "SocialForceParams", "VirtualAgent",
    "predict_dwa", "predict_astar", "predict_human_response", "step_social_forces",
    "build_virtual_agents",
]

DWA_SPEEDS = 5
DWA_TURN_RATES = 11
DWA_TURN_MAX = 2.5      # rad/s
DWA_ACCEL = 2.0         # m/s^2
DWA_LOOKAHEAD = 5       # steps scored per command


@dataclass(frozen=True)
class HumanPrediction:
    waypoints: np.ndarray
    source: str

    def __len__(self) -> int:
        return len(self.waypoints)

    @property
    def empty(self) -> bool:
        return len(self.waypoints) == 0


@dataclass(frozen=True)
class SocialForceParams:
    relaxation_time: float = 0.3
    interaction_strength: float = 6.0   # m/s^2 at contact
    interaction_range: float = 0.5     # m
    wall_strength: float = 4.0
    wall_range: float = 0.15
    desired_speed: float = 1.0
    v_max: float = 1.3

    def __post_init__(self):
        for name in ("relaxation_time", "interaction_strength", "interaction_range",
                     "wall_strength", "wall_range", "desired_speed", "v_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


# ---------------------------------------------------------------------------
# navigation function shared by the DWA scorer

@lru_cache(maxsize=64)
def _field(grid: GridAbstraction, goal_cell: tuple[int, int]) -> np.ndarray:
    return distance_field(grid, goal_cell) * grid.cell_size


def cost_to_go(grid: GridAbstraction, goal: GoalDisk, points) -> np.ndarray:
    """Obstacle-aware distance from points to the goal center (inf where unreachable)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    gcell = nearest_free_cell(grid, goal.center)
    if gcell is None:
        return np.full(len(pts), np.inf)
    fld = _field(grid, gcell)
    rows, cols = grid.shape
    cs = grid.cell_size
    r = np.clip(np.floor((pts[:, 1] - grid.origin[1]) / cs).astype(int), 0, rows - 1)
    c = np.clip(np.floor((pts[:, 0] - grid.origin[0]) / cs).astype(int), 0, cols - 1)
    goal_c = np.asarray(goal.center)
    gcenter = grid.cell_to_world(gcell)
    off = np.array([-1, 0, 1])
    rr = np.clip(r[:, None, None] + off[None, :, None], 0, rows - 1)
    cc = np.clip(c[:, None, None] + off[None, None, :], 0, cols - 1)
    cx = grid.origin[0] + (cc + 0.5) * cs
    cy = grid.origin[1] + (rr + 0.5) * cs
    val = fld[rr, cc] + np.hypot(pts[:, 0, None, None] - cx, pts[:, 1, None, None] - cy)
    best = val.reshape(len(pts), -1).min(axis=1)
    # inside the goal cell neighbourhood use the exact straight-line distance
    direct = np.hypot(pts[:, 0] - goal_c[0], pts[:, 1] - goal_c[1])
    near = np.hypot(pts[:, 0] - gcenter[0], pts[:, 1] - gcenter[1]) <= 1.5 * cs
    best = np.where(near, direct, best + np.hypot(*(gcenter - goal_c)))
    return best


_PROBE_ANGLES = np.linspace(-math.pi, math.pi, 32, endpoint=False)


def descent_heading(p, goal: GoalDisk, grid: GridAbstraction) -> float | None:
    """Heading of steepest descent of the cost-to-go around p (None if nowhere is reachable)."""
    step = grid.cell_size
    probes = np.stack([p[0] + step * np.cos(_PROBE_ANGLES), p[1] + step * np.sin(_PROBE_ANGLES)], axis=1)
    vals = cost_to_go(grid, goal, probes)
    if not np.isfinite(vals).any():
        return None
    return float(_PROBE_ANGLES[int(np.argmin(vals))])


def _initial_heading(h: HumanState, goal: GoalDisk, grid: GridAbstraction) -> float:
    if h.speed > 1e-6:
        return math.atan2(h.vy, h.vx)
    heading = descent_heading((h.x, h.y), goal, grid)
    return math.atan2(goal.center[1] - h.y, goal.center[0] - h.x) if heading is None else heading


def predict_dwa(h: HumanState, goal: GoalDisk, scenario: Scenario, horizon_steps: int,
                grid: GridAbstraction | None = None, dt: float | None = None,
                blocked=(), blocked_radius: float = 0.0) -> HumanPrediction:
    """Deterministic dynamic-window rollout of the human toward its goal.

    At each step a 5x11 grid of (speed, turn-rate) commands inside the dynamic
    window is rolled out for a short lookahead and scored by obstacle-aware
    distance to goal plus a clearance penalty; the best command is applied
    for one step. Cells within `blocked_radius` of a `blocked` point count as
    collisions but do not change the cost-to-go.
    """
    if horizon_steps < 1:
        raise ValueError("horizon_steps must be >= 1")
    from .world import build_grid
    grid = build_grid(scenario) if grid is None else grid
    occupancy = grid.with_occupied(list(blocked), blocked_radius).occupancy if len(blocked) else grid.occupancy
    dt = scenario.dt if dt is None else dt
    pos = np.array([h.x, h.y], dtype=float)
    speed = min(h.speed, scenario.human_speed)
    theta = _initial_heading(h, goal, grid)
    out = [pos.copy()]
    for _ in range(horizon_steps):
        v_lo = max(0.0, speed - DWA_ACCEL * dt)
        v_hi = min(scenario.human_speed, speed + DWA_ACCEL * dt)
        speeds = np.linspace(v_lo, v_hi, DWA_SPEEDS)
        rates = np.linspace(-DWA_TURN_MAX, DWA_TURN_MAX, DWA_TURN_RATES)
        V, W = np.meshgrid(speeds, rates, indexing="ij")
        V, W = V.ravel(), W.ravel()
        px = np.full(V.shape, pos[0])
        py = np.full(V.shape, pos[1])
        th = np.full(V.shape, theta)
        ok = np.ones(V.shape, dtype=bool)
        first = None
        for k in range(DWA_LOOKAHEAD):
            th = th + W * dt
            px = px + V * np.cos(th) * dt
            py = py + V * np.sin(th) * dt
            rows, cols = grid.shape
            r = np.floor((py - grid.origin[1]) / grid.cell_size).astype(int)
            c = np.floor((px - grid.origin[0]) / grid.cell_size).astype(int)
            inside = (r >= 0) & (r < rows) & (c >= 0) & (c < cols)
            occ = np.ones(V.shape, dtype=bool)
            occ[inside] = occupancy[r[inside], c[inside]]
            ok &= ~occ
            if k == 0:
                first = (px.copy(), py.copy(), th.copy())
        score = cost_to_go(grid, goal, np.stack([px, py], axis=1))
        # gentle preference for straight walking breaks symmetric ties
        score = score + 1e-3 * np.abs(W)
        score[~ok] = np.inf
        if not np.isfinite(score).any():
            speed = 0.0
            out.append(pos.copy())
            continue
        i = int(np.argmin(score))
        pos = np.array([first[0][i], first[1][i]])
        theta = float(first[2][i])
        speed = float(V[i])
        out.append(pos.copy())
    return HumanPrediction(np.array(out), "dwa")


def predict_astar(h: HumanState, goal: GoalDisk, grid: GridAbstraction, belief_obstacles=(),
                  obstacle_radius: float = 0.0) -> HumanPrediction:
    """8-connected A* path to the goal with believed robot zones marked occupied.

    Each believed zone point occupies its own cell plus every cell whose center
    lies within `obstacle_radius`. Returns an empty prediction if no path exists.
    """
    g = grid.with_occupied(list(belief_obstacles), obstacle_radius) if len(belief_obstacles) else grid
    start = grid.world_to_cell((h.x, h.y))
    if not grid.is_free(start):
        start = nearest_free_cell(grid, (h.x, h.y))
    gcell = grid.world_to_cell(goal.center)
    if not grid.is_free(gcell):
        gcell = nearest_free_cell(grid, goal.center)
    if start is None or gcell is None:
        return HumanPrediction(np.zeros((0, 2)), "astar")
    cells = astar(g, start, gcell)
    if not cells:
        return HumanPrediction(np.zeros((0, 2)), "astar")
    pts = grid_path_world(grid, cells)
    pts = np.vstack([[[h.x, h.y]], pts[1:-1], [goal.center]]) if len(pts) > 1 \
        else np.array([[h.x, h.y], goal.center])
    if np.allclose(pts[0], pts[-1]):
        pts = pts[:1]
    return HumanPrediction(pts, "astar")


def predict_human_response(h: HumanState, goal: GoalDisk, grid: GridAbstraction, belief_obstacles,
                           obstacle_radius: float, hold_time: float, speed: float,
                           spacing_time: float) -> HumanPrediction:
    """Timed path-to-goal for a human who believes the robot occupies the given zones.

    The believed zones only constrain the human until the next planning cycle
    (`hold_time`). The human takes whichever is faster: detouring around the
    zones, or walking the free path and waiting at the zone boundary until
    the hold expires. Waypoints are spaced `spacing_time` apart in time.
    """
    free = predict_astar(h, goal, grid)
    if free.empty:
        return HumanPrediction(np.zeros((0, 2)), "astar")
    step = speed * spacing_time
    if not len(belief_obstacles):
        return HumanPrediction(resample_polyline(free.waypoints, step), "astar")
    obs = np.asarray(belief_obstacles, dtype=float)
    dense = resample_polyline(free.waypoints, step)
    d = np.min(np.hypot(dense[:, None, 0] - obs[None, :, 0], dense[:, None, 1] - obs[None, :, 1]), axis=1)
    blocked = np.nonzero(d <= obstacle_radius)[0]
    if not len(blocked):
        return HumanPrediction(dense, "astar")
    k = int(blocked[0])
    stop = max(k - 1, 0)
    hold_steps = int(math.ceil(hold_time / spacing_time - 1e-9))
    wait_count = max(hold_steps - stop, 0)
    waited = np.vstack([dense[:stop + 1], np.repeat(dense[stop:stop + 1], wait_count, axis=0),
                        dense[stop + 1:]])
    detour = predict_astar(h, goal, grid, obs, obstacle_radius)
    if not detour.empty:
        det = resample_polyline(detour.waypoints, step)
        if len(det) < len(waited):
            return HumanPrediction(det, "astar")
    return HumanPrediction(waited, "astar")


# ---------------------------------------------------------------------------
# execution model

@dataclass
class VirtualAgent:
    position: np.ndarray
    goal: np.ndarray
    speed: float

    def advance(self, dt: float) -> None:
        d = self.goal - self.position
        n = float(np.hypot(*d))
        if n <= self.speed * dt or n == 0:
            self.position = self.goal.copy()
        else:
            self.position = self.position + d / n * self.speed * dt


def build_virtual_agents(robot_xy, robot_vel, zone_centers, horizon_time: float,
                         arrive_time: float | None = None) -> list[VirtualAgent]:
    """Agents from the robot's position to every believed zone.

    With no believed zone a single agent follows the robot's current velocity
    for `horizon_time`. Zone agents reach their zone after `arrive_time`.
    """
    start = np.asarray(robot_xy, dtype=float)
    vel = np.asarray(robot_vel, dtype=float)
    if not len(zone_centers):
        speed = float(np.hypot(*vel))
        return [VirtualAgent(start.copy(), start + vel * horizon_time, speed)]
    arrive = horizon_time if arrive_time is None else arrive_time
    agents = []
    for zc in zone_centers:
        zc = np.asarray(zc, dtype=float)
        dist = float(np.hypot(*(zc - start)))
        agents.append(VirtualAgent(start.copy(), zc.copy(), dist / arrive if arrive > 0 else dist))
    return agents


def _wall_force(p: np.ndarray, scenario: Scenario, params: SocialForceParams, r_h: float) -> np.ndarray:
    f = np.zeros(2)
    x0, y0, x1, y1 = scenario.bounds
    for d, n in ((p[0] - x0, (1.0, 0.0)), (x1 - p[0], (-1.0, 0.0)),
                 (p[1] - y0, (0.0, 1.0)), (y1 - p[1], (0.0, -1.0))):
        f += params.wall_strength * math.exp((r_h - d) / params.wall_range) * np.array(n)
    for poly in scenario.obstacle_arrays:
        m = len(poly)
        best_d, best_q = math.inf, None
        for i in range(m):
            a, b = poly[i], poly[(i + 1) % m]
            ab = b - a
            t = min(max(float((p - a) @ ab) / float(ab @ ab), 0.0), 1.0)
            q = a + t * ab
            d = float(np.hypot(*(p - q)))
            if d < best_d:
                best_d, best_q = d, q
        if best_d > 1e-9 and best_d < r_h + 8 * params.wall_range:
            n = (p - best_q) / best_d
            f += params.wall_strength * math.exp((r_h - best_d) / params.wall_range) * n
    return f


def social_force(h: HumanState, goal: GoalDisk, agent_positions, scenario: Scenario,
                 params: SocialForceParams, r_h: float | None = None, r_other: float | None = None,
                 grid: GridAbstraction | None = None) -> np.ndarray:
    """Total acceleration on the human (goal drive + agent and wall repulsion).

    With a grid the goal drive follows the obstacle-aware cost-to-go instead of
    the straight line to the goal.
    """
    r_h = scenario.r_h if r_h is None else r_h
    r_other = scenario.r_r if r_other is None else r_other
    p = h.position
    to_goal = np.asarray(goal.center) - p
    dist = float(np.hypot(*to_goal))
    desired = np.zeros(2)
    if dist > 1e-9:
        # slow down on final approach instead of orbiting the goal center
        speed = params.desired_speed * min(1.0, dist / max(goal.radius, 1e-9))
        direction = to_goal / dist
        if grid is not None and dist > goal.radius:
            heading = descent_heading(p, goal, grid)
            if heading is not None:
                direction = np.array([math.cos(heading), math.sin(heading)])
        desired = direction * speed
    acc = (desired - h.velocity) / params.relaxation_time
    for q in agent_positions:
        d_vec = p - np.asarray(q, dtype=float)
        d = float(np.hypot(*d_vec))
        if d < 1e-9:
            continue
        acc += params.interaction_strength * math.exp((r_h + r_other - d) / params.interaction_range) * d_vec / d
    acc += _wall_force(p, scenario, params, r_h)
    return acc


def step_social_forces(h: HumanState, goal: GoalDisk, virtual_agents, scenario: Scenario,
                       params: SocialForceParams, dt: float,
                       grid: GridAbstraction | None = None) -> HumanState:
    """One explicit step of the social-forces human.

    `virtual_agents` may hold VirtualAgent objects (advanced in place after the
    force evaluation) or plain (position, goal) pairs, which stay where they are.
    """
    positions = [a.position if isinstance(a, VirtualAgent) else a[0] for a in virtual_agents]
    acc = social_force(h, goal, positions, scenario, params, grid=grid)
    vel = h.velocity + acc * dt
    sp = float(np.hypot(*vel))
    if sp > params.v_max:
        vel = vel / sp * params.v_max
    pos = h.position + vel * dt
    for a in virtual_agents:
        if isinstance(a, VirtualAgent):
            a.advance(dt)
    return HumanState(float(pos[0]), float(pos[1]), float(vel[0]), float(vel[1]))
