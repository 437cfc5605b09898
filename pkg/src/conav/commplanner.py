"""Joint communication and motion planning: branch search and the episode loop."""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .belief import Belief, SensorModel, ZoneLayout, observe, reach_relation, update_belief
from .dynamics import HumanState, RobotControl, RobotState, TimedPlan, discretize_plan, in_goal
from .human import (SocialForceParams, build_virtual_agents, predict_dwa, predict_human_response,
                    step_social_forces)
from .metrics import pad_to_same_length
from .safety import PredictedHumanTube, SafetyParams, safety_value
from .tbrrt import (DiverseCostWeights, RrtVertex, VertexCostWeights,
                    expand_tree, path_to, select_diverse_plans)
from .world import (NULL_SIGNAL, CostWeights, Scenario, build_grid, cells_to_world, descend_field,
                    distance_field, nearest_free_cell, resample_polyline, scenario_digest)

WAYPOINT_STRIDE = 2
STALL_WINDOW = 50       # steps without progress before a deadlock is declared
STALL_DISTANCE = 0.1    # m of cost-to-go that counts as progress
PLAN_FRONTIER = 0.5     # candidate plans end at >= half the tree depth


# ---------------------------------------------------------------------------
# cost terms

def path_cost(waypoints) -> float:
    """Sum of distances between successive waypoints."""
    pts = np.asarray(waypoints, dtype=float).reshape(-1, 2)
    if not len(pts):
        raise ValueError("path has no waypoints")
    return float(np.sum(np.hypot(*np.diff(pts, axis=0).T))) if len(pts) > 1 else 0.0


def min_aligned_distance(g1, g2) -> float:
    a, b = pad_to_same_length(g1, g2)
    return float(np.min(np.hypot(*(a - b).T)))


def clearance(g1, g2, sigma_safe: float) -> float:
    """max(time-aligned minimum distance - sigma_safe, 0)."""
    return max(min_aligned_distance(g1, g2) - sigma_safe, 0.0)


@dataclass
class SearchNode:
    robot: RobotState
    human: HumanState
    signal: str
    plan: TimedPlan | None
    plan_index: int
    posterior: Belief
    gamma_r: np.ndarray
    gamma_h: np.ndarray
    cost: float = math.inf
    clearance: float = 0.0


def node_cost(n: SearchNode, w: CostWeights) -> float:
    """Weighted path lengths, inverse clearance and signal cost; inf when blocked."""
    if len(n.gamma_h) == 0:
        return math.inf
    clr = clearance(n.gamma_r, n.gamma_h, w.sigma_safe)
    n.clearance = clr
    if clr <= 0:
        return math.inf
    return (w.eta_R * path_cost(n.gamma_r) + w.eta_H * path_cost(n.gamma_h)
            + w.eta_P / clr + w.eta_C * w.comm_cost(n.signal))


# ---------------------------------------------------------------------------
# per-scenario machinery

class PlannerContext:
    """Grids, fields and model parameters derived once per scenario."""

    def __init__(self, scenario: Scenario, vertex_weights: VertexCostWeights = VertexCostWeights(),
                 diverse_weights: DiverseCostWeights = DiverseCostWeights(),
                 sf_params: SocialForceParams | None = None, stride: int = WAYPOINT_STRIDE):
        self.scenario = scenario
        self.human_grid = build_grid(scenario, inflation=scenario.r_h)
        self.robot_grid = build_grid(scenario, inflation=scenario.r_r)
        gcell = nearest_free_cell(self.robot_grid, scenario.robot_goal.center)
        self.robot_field = distance_field(self.robot_grid, gcell)
        self.layout = ZoneLayout.for_delta(scenario.delta_neighborhood)
        self.sensor = SensorModel.compass([s for s in scenario.comm_vocab], self.layout, scenario.conflation)
        self.safety = SafetyParams.from_scenario(scenario)
        self.sf = sf_params or SocialForceParams(desired_speed=scenario.human_speed, v_max=scenario.human_v_max)
        self.vertex_weights = vertex_weights
        self.diverse_weights = diverse_weights
        self.stride = stride

    @property
    def waypoint_dt(self) -> float:
        return self.scenario.dt * self.stride

    def complete_robot_path(self, plan: TimedPlan) -> np.ndarray:
        """Plan waypoints followed by a grid shortest path from its end to the goal."""
        scn = self.scenario
        head = discretize_plan(plan, self.stride)
        end = plan.end
        if in_goal(end, scn.robot_goal):
            return head
        cell = nearest_free_cell(self.robot_grid, (end.x, end.y))
        cells = descend_field(self.robot_grid, self.robot_field, cell) if cell else []
        pts = cells_to_world(self.robot_grid, cells)
        if len(pts):
            pts[0] = (end.x, end.y)
        else:
            pts = np.array([[end.x, end.y]])
        pts = np.vstack([pts, [scn.robot_goal.center]])
        tail = resample_polyline(pts, scn.v_max * self.waypoint_dt)
        return np.vstack([head, tail[1:]])

    def cost_to_goal(self, s: RobotState) -> float:
        """Grid distance from the robot's cell to the goal cell, in metres."""
        cell = nearest_free_cell(self.robot_grid, (s.x, s.y))
        return math.inf if cell is None else float(self.robot_field[cell]) * self.robot_grid.cell_size

    def believed_points(self, b: Belief, anchor) -> np.ndarray:
        """Centers of the believed zones around `anchor`, minus the human's own zone."""
        idx = [i for i in b.indices if i != self.layout.center_index]
        return self.layout.centers(anchor)[idx] if idx else np.zeros((0, 2))

    def zone_free(self, anchor) -> np.ndarray:
        return self.scenario.freespace_mask(self.layout.centers(anchor), self.scenario.r_r)


def stable_seed(*parts) -> int:
    return zlib.crc32("|".join(str(p) for p in parts).encode())


# ---------------------------------------------------------------------------
# one planning cycle

@dataclass
class CycleDecision:
    signal: str
    plan: TimedPlan | None
    plan_index: int
    posterior: Belief
    branches: list[SearchNode]
    fallback: bool
    tube: PredictedHumanTube
    n_vertices: int
    plans: list[TimedPlan] = field(default_factory=list)

    @property
    def best(self) -> SearchNode | None:
        for n in self.branches:
            if n.signal == self.signal and n.plan_index == self.plan_index:
                return n
        return None


def predict_tube(human: HumanState, belief: Belief, scenario: Scenario, ctx: PlannerContext,
                 t0: float) -> PredictedHumanTube:
    """DWA tube for the coming horizon; zones the human believes hold the robot are kept clear."""
    blocked = ctx.believed_points(belief, (human.x, human.y))
    pred = predict_dwa(human, scenario.human_goal, scenario, scenario.horizon_steps, grid=ctx.human_grid,
                       blocked=blocked, blocked_radius=scenario.r_r + scenario.r_h)
    return PredictedHumanTube(pred.waypoints, ctx.safety.radius, t0, scenario.dt)


def _motion_plans(robot: RobotState, tube: PredictedHumanTube, scenario: Scenario, ctx: PlannerContext,
                  rng: np.random.Generator, t0: float) -> tuple[list[TimedPlan], int]:
    root = RrtVertex(0, robot, t0)
    verts = expand_tree(root, tube, scenario, scenario.rrt_budget, rng, ctx.robot_grid,
                        ctx.vertex_weights)
    n_cand = len(verts) - 1
    if n_cand == 0:
        return [], len(verts)
    if n_cand == 1:
        return [path_to(verts, 1, scenario.dt)], len(verts)
    p = min(scenario.p_plans, n_cand)
    plans, _ = select_diverse_plans(verts, p, ctx.diverse_weights, rng, scenario.dt,
                                    frontier=PLAN_FRONTIER, goal=scenario.robot_goal)
    return plans, len(verts)


def plan_cycle(robot: RobotState, human: HumanState, b_k: Belief, anchor, scenario: Scenario,
               ctx: PlannerContext, rng: np.random.Generator, t0: float = 0.0,
               workers: int = 1) -> CycleDecision:
    """Expand the tree, pick diverse plans and score every (plan, signal) branch."""
    if in_goal(robot, scenario.robot_goal):
        raise ValueError("robot already in goal")
    tube = predict_tube(human, b_k, scenario, ctx, t0)
    plans, n_verts = _motion_plans(robot, tube, scenario, ctx, rng, t0)
    if not plans:
        hold = TimedPlan(t0, scenario.dt, (robot,), ())
        return CycleDecision(NULL_SIGNAL, hold, -1, b_k, [], True, tube, n_verts, [])

    # belief branches depend only on the signal
    reach = None
    here = (human.x, human.y)
    if any(s != NULL_SIGNAL for s in scenario.comm_vocab) or not b_k.is_empty:
        old = anchor if anchor is not None else here
        reach = reach_relation(old, here, ctx.layout, scenario.v_max * scenario.horizon,
                               (ctx.zone_free(old), ctx.zone_free(here)))

    def signal_branch(sig: str):
        if sig == NULL_SIGNAL and b_k.is_empty:
            post = b_k
        else:
            obs = observe(human, sig, plans[0].end, ctx.sensor)
            post = update_belief(b_k, obs, human, ctx.layout, ctx.sensor, reach)
        obstacles = ctx.believed_points(post, here)
        gamma_h = predict_human_response(
            human, scenario.human_goal, ctx.human_grid, obstacles, scenario.r_r + scenario.r_h,
            scenario.horizon, scenario.human_speed, ctx.waypoint_dt).waypoints
        return post, gamma_h

    vocab = list(scenario.comm_vocab)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            sig_results = list(ex.map(signal_branch, vocab))
            gammas_r = list(ex.map(ctx.complete_robot_path, plans))
    else:
        sig_results = [signal_branch(s) for s in vocab]
        gammas_r = [ctx.complete_robot_path(p) for p in plans]

    branches = []
    for pi, plan in enumerate(plans):
        for si, sig in enumerate(vocab):
            post, gamma_h = sig_results[si]
            node = SearchNode(robot, human, sig, plan, pi, post, gammas_r[pi], gamma_h)
            node.cost = node_cost(node, scenario.weights)
            branches.append(node)

    def key(n: SearchNode):
        return (n.cost, 0 if n.signal == NULL_SIGNAL else 1 + vocab.index(n.signal), n.plan_index)

    best = min(branches, key=key)
    fallback = not math.isfinite(best.cost)
    if fallback:
        best = next(n for n in branches if n.signal == NULL_SIGNAL and n.plan_index == 0)
    return CycleDecision(best.signal, best.plan, best.plan_index, best.posterior, branches,
                         fallback, tube, n_verts, plans)


# ---------------------------------------------------------------------------
# episode loop

@dataclass
class CycleRecord:
    index: int
    t: float
    signal: str
    plan_index: int
    fallback: bool
    n_vertices: int
    branch_costs: list[tuple[str, int, float]]
    belief: str
    theorem_ok: bool
    selected_clearance: float


@dataclass
class StepRecord:
    t: float
    robot: RobotState
    human: HumanState
    belief: str
    signal: str
    barrier: float
    tube_breach: bool


@dataclass
class Episode:
    scenario: Scenario
    seed: int
    baseline: bool
    f_priority: float | None
    outcome: str
    solution: list[tuple[str, TimedPlan]]
    steps: list[StepRecord]
    cycles: list[CycleRecord]
    robot_goal_time: float | None
    human_goal_time: float | None
    log_header: str = ""

    @property
    def robot_xy(self) -> np.ndarray:
        return np.array([[s.robot.x, s.robot.y] for s in self.steps])

    @property
    def human_xy(self) -> np.ndarray:
        return np.array([[s.human.x, s.human.y] for s in self.steps])

    @property
    def pi(self) -> int:
        return len(self.cycles)


def apply_priority(scenario: Scenario, f: float | None, eta_const: float = 1.5) -> Scenario:
    if f is None:
        return scenario
    w = replace(scenario.weights, eta_R=f * eta_const, eta_H=(1.0 - f) * eta_const)
    return replace(scenario, weights=w)


def baseline_scenario(scenario: Scenario) -> Scenario:
    return scenario.with_vocab([NULL_SIGNAL])


def run_episode(scenario: Scenario, seed: int | None = None, baseline: bool = False,
                f_priority: float | None = None, workers: int = 1,
                ctx: PlannerContext | None = None, step_cap: int | None = None) -> Episode:
    """Plan, communicate and execute until the robot reaches its goal or stalls.

    The full method executes each selected partial plan to its end. The
    baseline never communicates and applies only the first control of every
    plan before replanning.
    """
    seed = scenario.seed if seed is None else seed
    scn = apply_priority(scenario, f_priority)
    if baseline:
        scn = baseline_scenario(scn)
    ctx = ctx if ctx is not None and ctx.scenario == scn else PlannerContext(scn)
    rng = np.random.default_rng(stable_seed(scenario_digest(scenario), seed, f_priority))
    step_cap = scn.step_cap if step_cap is None else step_cap
    dt = scn.dt

    robot, human = scn.robot_start, scn.human_start
    belief = Belief.empty(ctx.layout.size)
    anchor = None
    t = 0.0
    k = 0
    steps = [StepRecord(0.0, robot, human, belief.as_string(), NULL_SIGNAL, math.nan, False)]
    cycles: list[CycleRecord] = []
    solution: list[tuple[str, TimedPlan]] = []
    outcome = None
    human_goal_time = 0.0 if in_goal((human.x, human.y), scn.human_goal) else None
    robot_goal_time = None
    robot_vel = np.zeros(2)
    best_togo = ctx.cost_to_goal(robot)
    last_progress = 0

    while outcome is None:
        if in_goal(robot, scn.robot_goal):
            outcome = "GOAL"
            robot_goal_time = t
            break
        dec = plan_cycle(robot, human, belief, anchor, scn, ctx, rng, t0=t, workers=workers)
        node = dec.best
        theorem_ok = True
        sel_clear = math.nan
        if node is not None:
            sel_clear = node.clearance
            theorem_ok = dec.fallback or min_aligned_distance(node.gamma_r, node.gamma_h) > scn.sigma_safe
        cycles.append(CycleRecord(len(cycles), t, dec.signal, dec.plan_index, dec.fallback, dec.n_vertices,
                                  [(n.signal, n.plan_index, n.cost) for n in dec.branches],
                                  dec.posterior.as_string(), theorem_ok, sel_clear))
        cycle_anchor = (human.x, human.y)
        belief, anchor = dec.posterior, cycle_anchor
        zone_pts = ctx.believed_points(belief, cycle_anchor)
        agents = build_virtual_agents((robot.x, robot.y), robot_vel, zone_pts, scn.horizon,
                                      arrive_time=scn.horizon / 2)

        plan = dec.plan
        if len(plan.states) == 1:
            controls = [RobotControl()]
            states = [plan.states[0]]
        else:
            controls = list(plan.controls)
            states = list(plan.states[1:])
        if baseline:
            controls, states = controls[:1], states[:1]
        t_cycle = t
        executed = [robot]
        for j, (a, nxt) in enumerate(zip(controls, states)):
            human = step_social_forces(human, scn.human_goal, agents, scn, ctx.sf, dt, ctx.human_grid)
            prev = robot
            robot = nxt
            robot_vel = np.array([robot.x - prev.x, robot.y - prev.y]) / dt
            t = round(t + dt, 10)
            k += 1
            center = dec.tube.center_at(j + 1)
            barrier = safety_value(robot, center, ctx.safety)
            breach = bool(np.hypot(human.x - center[0], human.y - center[1]) > scn.epsilon_tube)
            steps.append(StepRecord(t, robot, human, belief.as_string(), dec.signal, barrier, breach))
            executed.append(robot)
            if human_goal_time is None and in_goal((human.x, human.y), scn.human_goal):
                human_goal_time = t
            if in_goal(robot, scn.robot_goal) or k >= step_cap:
                break
        seg = TimedPlan(t_cycle, dt, tuple(executed),
                        tuple(controls[:len(executed) - 1]))
        solution.append((dec.signal, seg))
        if in_goal(robot, scn.robot_goal):
            continue
        if k >= step_cap:
            outcome = "TIMEOUT"
        else:
            togo = ctx.cost_to_goal(robot)
            if togo <= best_togo - STALL_DISTANCE:
                best_togo, last_progress = togo, k
            elif k - last_progress >= STALL_WINDOW:
                outcome = "DEADLOCK"

    ep = Episode(scenario, seed, baseline, f_priority, outcome, solution, steps, cycles,
                 robot_goal_time, human_goal_time)
    ep.log_header = (f"# conav-log v1 scenario={scenario_digest(scenario)} map={scenario.map_id} "
                     f"seed={seed} method={'baseline' if baseline else 'full'} f={f_priority} "
                     f"eta={scn.weights.eta_R!r},{scn.weights.eta_H!r},{scn.weights.eta_P!r},"
                     f"{scn.weights.eta_C!r} vocab={','.join(scn.comm_vocab)} dt={scn.dt!r} "
                     f"horizon={scn.horizon!r} p={scn.p_plans} budget={scn.rrt_budget}")
    return ep
