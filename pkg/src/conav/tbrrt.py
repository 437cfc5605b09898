"""Time-based RRT with CBF-filtered edges and diverse plan selection.

Every edge is a single ``dt`` step of the unicycle, so a vertex at depth k sits
at time ``t0 + k*dt`` and is checked against the human tube center of step k.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import GoalDisk, RobotControl, RobotState, TimedPlan, in_goal, step_dynamics, wrap_angle
from .safety import InfeasibleQP, PredictedHumanTube, SafetyParams, safe_control, safety_value
from .world import GridAbstraction, Scenario

GOAL_BIAS = 0.1
MAX_PASSES = 50


@dataclass(frozen=True)
class VertexCostWeights:
    w_dG: float = 1.0
    w_dH: float = 0.5
    w_g: float = 0.3
    w_t: float = 2.0

    def __post_init__(self):
        vals = (self.w_dG, self.w_dH, self.w_g, self.w_t)
        if min(vals) < 0 or max(vals) == 0:
            raise ValueError("vertex weights must be >= 0 and not all zero")


@dataclass(frozen=True)
class DiverseCostWeights:
    w_c: float = 1.0
    w_d: float = 1.0

    def __post_init__(self):
        if not (self.w_c > 0 and self.w_d > 0):
            raise ValueError("w_c and w_d must be > 0")


@dataclass
class RrtVertex:
    id: int
    state: RobotState
    time: float
    parent: int | None = None
    edge_control: RobotControl = RobotControl()
    cost: float = 0.0
    depth: int = 0


class InsufficientVertices(ValueError):
    pass


# ---------------------------------------------------------------------------
# vertex cost

def heading_cost(s: RobotState, goal: GoalDisk) -> float:
    bearing = math.atan2(goal.center[1] - s.y, goal.center[0] - s.x)
    return abs(wrap_angle(bearing - s.theta))


def trap_cost(p, goal: GoalDisk, grid: GridAbstraction) -> int:
    """Occupied waypoints on the straight segment p -> goal, sampled every cell."""
    x0, y0 = float(p[0]), float(p[1])
    gx, gy = goal.center
    length = math.hypot(gx - x0, gy - y0)
    n = int(math.floor(length / grid.cell_size))
    t = np.arange(n + 1) * grid.cell_size / length if length > 0 else np.zeros(1)
    rows, cols = grid.shape
    r = np.clip(np.floor((y0 + t * (gy - y0) - grid.origin[1]) / grid.cell_size).astype(int), 0, rows - 1)
    c = np.clip(np.floor((x0 + t * (gx - x0) - grid.origin[0]) / grid.cell_size).astype(int), 0, cols - 1)
    return int(np.count_nonzero(grid.occupancy[r, c]))


def vertex_cost(v, goal: GoalDisk, human, weights: VertexCostWeights, grid: GridAbstraction) -> float:
    s = v.state if isinstance(v, RrtVertex) else v
    d_goal = math.hypot(s.x - goal.center[0], s.y - goal.center[1])
    d_human = math.hypot(s.x - float(human[0]), s.y - float(human[1]))
    cost = weights.w_dG * d_goal + weights.w_dH * d_human + weights.w_g * heading_cost(s, goal)
    if weights.w_t:
        cost += weights.w_t * trap_cost((s.x, s.y), goal, grid)
    return cost


# ---------------------------------------------------------------------------
# expansion

def steer(s: RobotState, target, dt: float, v_max: float, omega_max: float) -> RobotControl:
    """Proportional heading controller toward `target`, clipped to the bounds."""
    err = wrap_angle(math.atan2(target[1] - s.y, target[0] - s.x) - s.theta)
    omega = max(-omega_max, min(omega_max, err / dt))
    v = v_max * max(0.0, math.cos(err))
    dist = math.hypot(target[0] - s.x, target[1] - s.y)
    return RobotControl(min(v, dist / dt), omega)


def expand_tree(root: RrtVertex, tube: PredictedHumanTube, scenario: Scenario, budget: int,
                rng: np.random.Generator, grid: GridAbstraction,
                weights: VertexCostWeights = VertexCostWeights(),
                max_depth: int | None = None, goal: GoalDisk | None = None) -> list[RrtVertex]:
    """Grow a time-stamped tree of at most `budget` vertices.

    Edges whose filtered control is infeasible, that leave free space, or that
    end with B < 0 against the tube are discarded. A fully blocked robot yields
    a root-only tree.
    """
    goal = scenario.robot_goal if goal is None else goal
    params = SafetyParams.from_scenario(scenario)
    bounds = scenario.control_bounds
    dt = scenario.dt
    max_depth = scenario.horizon_steps if max_depth is None else max_depth
    human_now = tube.center_at(0)
    root.cost = vertex_cost(root, goal, human_now, weights, grid)
    verts = [root]
    xy = np.empty((budget, 2))
    xy[0] = (root.state.x, root.state.y)
    heading = np.empty(budget)
    heading[0] = root.state.theta
    expandable = np.zeros(budget, dtype=bool)
    expandable[0] = max_depth > 0
    x0, y0, x1, y1 = scenario.bounds
    k0 = int(round((root.time - tube.t0) / tube.dt))
    b_root = safety_value(root.state, tube.center_at(k0), params)
    attempts = 0
    max_attempts = 4 * budget
    while len(verts) < budget and attempts < max_attempts and expandable[:len(verts)].any():
        attempts += 1
        if rng.random() < GOAL_BIAS:
            target = goal.center
        else:
            for _ in range(20):
                target = (x0 + rng.random() * (x1 - x0), y0 + rng.random() * (y1 - y0))
                if scenario.point_in_freespace(target, scenario.r_r):
                    break
        n = len(verts)
        # nearest in time-to-reach: straight-line travel plus turning toward the target
        dx, dy = target[0] - xy[:n, 0], target[1] - xy[:n, 1]
        turn = np.abs((np.arctan2(dy, dx) - heading[:n] + math.pi) % (2 * math.pi) - math.pi)
        reach = np.hypot(dx, dy) / bounds.v_max + turn / bounds.omega_max
        reach[~expandable[:n]] = np.inf
        parent = verts[int(np.argmin(reach))]
        nominal = steer(parent.state, target, dt, bounds.v_max, bounds.omega_max)
        k = k0 + parent.depth + 1
        center = tube.center_at(k)
        try:
            a = safe_control(parent.state, nominal, center, params, bounds,
                             tube.velocity_at(k - 1))
        except InfeasibleQP:
            continue
        child = step_dynamics(parent.state, a, dt)
        if not scenario.point_in_freespace((child.x, child.y), scenario.r_r):
            continue
        b_child = safety_value(child, center, params)
        if b_child < min(0.0, b_root):
            continue
        if a.v == 0.0 and a.omega == 0.0:
            continue
        v = RrtVertex(n, child, parent.time + dt, parent.id, a, 0.0, parent.depth + 1)
        v.cost = vertex_cost(v, goal, human_now, weights, grid)
        verts.append(v)
        xy[n] = (child.x, child.y)
        heading[n] = child.theta
        expandable[n] = v.depth < max_depth and not in_goal(child, goal)
    return verts


def path_to(verts: list[RrtVertex], vid: int, dt: float) -> TimedPlan:
    chain = []
    cur = verts[vid]
    while cur is not None:
        chain.append(cur)
        cur = verts[cur.parent] if cur.parent is not None else None
    chain.reverse()
    return TimedPlan(chain[0].time, dt, tuple(v.state for v in chain),
                     tuple(v.edge_control for v in chain[1:]))


# ---------------------------------------------------------------------------
# diverse selection

def diverse_cost(subset, costs, xy, weights: DiverseCostWeights, dist=None) -> float:
    """Sum over the subset of w_c*c_i / (w_d * sum_{j != i} d_ij); inf for duplicates."""
    idx = list(subset)
    total = 0.0
    for i in idx:
        if dist is not None:
            s = sum(dist[i][j] for j in idx if j != i)
        else:
            s = sum(math.hypot(xy[i][0] - xy[j][0], xy[i][1] - xy[j][1]) for j in idx if j != i)
        denom = weights.w_d * s
        if denom <= 0:
            return math.inf
        total += weights.w_c * costs[i] / denom
    return total


@dataclass
class SelectionResult:
    subset: tuple[int, ...]
    cost: float
    initial_subset: tuple[int, ...]
    initial_cost: float
    swaps: int
    passes: int


def select_diverse_subset(costs, xy, p: int, weights: DiverseCostWeights,
                          rng: np.random.Generator, candidates=None) -> SelectionResult:
    """Swap-based local search for the p-subset minimising the diversity cost."""
    costs = [float(c) for c in costs]
    pts = np.asarray(xy, dtype=float)
    dist = np.hypot(pts[:, None, 0] - pts[None, :, 0], pts[:, None, 1] - pts[None, :, 1]).tolist()
    xy = pts.tolist()
    cand = list(range(len(costs))) if candidates is None else sorted(candidates)
    if len(cand) < p:
        raise InsufficientVertices("insufficient vertices")
    init = tuple(sorted(int(i) for i in rng.choice(cand, size=p, replace=False)))
    cur, cur_cost = init, diverse_cost(init, costs, xy, weights, dist)
    init_cost = cur_cost
    swaps = passes = 0
    while passes < MAX_PASSES:
        passes += 1
        improved = False
        for nu in cand:
            if nu in cur:
                continue
            pool = tuple(sorted(cur + (nu,)))
            best, best_cost = None, math.inf
            for combo in itertools.combinations(pool, p):
                c = diverse_cost(combo, costs, xy, weights, dist)
                if c < best_cost:
                    best, best_cost = combo, c
            if best is not None and best_cost < cur_cost:
                cur, cur_cost = best, best_cost
                swaps += 1
                improved = True
        if not improved:
            break
    return SelectionResult(cur, cur_cost, init, init_cost, swaps, passes)


def select_diverse_plans(verts: list[RrtVertex], p: int, weights: DiverseCostWeights,
                         rng: np.random.Generator, dt: float, include_root: bool = False,
                         frontier: float = 0.0, goal: GoalDisk | None = None
                         ) -> tuple[list[TimedPlan], SelectionResult]:
    """Pick p diverse low-cost vertices and return their root paths, cheapest first.

    With ``frontier`` > 0 only vertices at least that fraction of the deepest
    vertex's depth, or inside `goal`, are eligible, as long as p of them exist.
    """
    costs = np.array([v.cost for v in verts])
    xy = np.array([[v.state.x, v.state.y] for v in verts])
    cand = [v.id for v in verts if include_root or v.parent is not None]
    if frontier > 0 and cand:
        deepest = max(verts[i].depth for i in cand)
        deep = [i for i in cand if verts[i].depth >= frontier * deepest
                or (goal is not None and in_goal(verts[i].state, goal))]
        if len(deep) >= p:
            cand = deep
    res = select_diverse_subset(costs, xy, p, weights, rng, cand)
    order = sorted(res.subset, key=lambda i: (costs[i], i))
    return [path_to(verts, i, dt) for i in order], res
