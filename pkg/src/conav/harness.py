"""Trial reports, batch runs, range summaries and trajectory logs."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .commplanner import Episode, PlannerContext, apply_priority, baseline_scenario, run_episode
from .metrics import REPORT_FIELDS, TrialReport, normalized_speed, proximity_cost
from .safety import SafetyParams
from .world import Scenario, astar, build_grid, grid_path_world, nearest_free_cell, polyline_length

METHODS = ("full", "baseline")
LOG_FIELDS_STEP = "S t x y theta hx hy hvx hvy belief signal B breach"
LOG_FIELDS_CYCLE = "C index t signal plan_index fallback n_vertices belief clearance theorem_ok"


def optimal_cost(scenario: Scenario, start, goal, inflation: float) -> float:
    """Length of the agent-free grid shortest path from `start` to the edge of `goal`."""
    grid = build_grid(scenario, inflation=inflation)
    a = nearest_free_cell(grid, start)
    b = nearest_free_cell(grid, goal.center)
    if a is None or b is None:
        return math.inf
    cells = astar(grid, a, b)
    if not cells:
        return math.inf
    pts = grid_path_world(grid, cells, start_point=start, end_point=goal.center)
    if len(pts) == 1:
        pts = np.vstack([pts, [goal.center]])
    return max(polyline_length(pts) - goal.radius, 0.0)


def _path_length(xy: np.ndarray) -> float:
    return float(np.sum(np.hypot(*np.diff(xy, axis=0).T))) if len(xy) > 1 else 0.0


def make_report(ep: Episode) -> TrialReport:
    scn = ep.scenario
    rxy, hxy = ep.robot_xy, ep.human_xy
    h_end = len(hxy)
    if ep.human_goal_time is not None:
        h_end = int(round(ep.human_goal_time / scn.dt)) + 1
    rns = hns = None
    anomalous = False
    if ep.outcome == "GOAL" and ep.robot_goal_time:
        c_r = optimal_cost(scn, scn.robot_start.xy, scn.robot_goal, scn.r_r)
        rns = normalized_speed(c_r, ep.robot_goal_time, scn.v_max)
        anomalous = rns > 1.0
    if ep.human_goal_time:
        c_h = optimal_cost(scn, scn.human_start.position, scn.human_goal, scn.r_h)
        hns = normalized_speed(c_h, ep.human_goal_time, scn.human_speed)
    params = SafetyParams.from_scenario(scn)
    pc = proximity_cost(rxy, hxy, params)
    b = np.array([s.barrier for s in ep.steps[1:]])
    breach = np.array([s.tube_breach for s in ep.steps[1:]], dtype=bool)
    viol = b < 0
    return TrialReport(
        map_id=scn.map_id, method="baseline" if ep.baseline else "full", seed=ep.seed,
        f_priority=ep.f_priority, outcome=ep.outcome,
        r_cost_to_goal=_path_length(rxy), h_cost_to_goal=_path_length(hxy[:h_end]),
        rns=rns, hns=hns, pi=ep.pi, pc=pc, steps=len(ep.steps) - 1,
        signals_sent=sum(1 for c in ep.cycles if c.signal != "null"),
        fallback_cycles=sum(1 for c in ep.cycles if c.fallback),
        safety_violations=int(np.count_nonzero(viol)),
        tube_breaches=int(np.count_nonzero(breach)),
        unexplained_violations=int(np.count_nonzero(viol & ~breach)),
        rns_anomalous=anomalous)


# ---------------------------------------------------------------------------
# trajectory log

def format_log(ep: Episode) -> str:
    """Plain-text trajectory log: header, one S line per step, one C line per cycle.

    Floats are written with repr so that a log round-trips exactly.
    """
    out = [ep.log_header, "# " + LOG_FIELDS_STEP, "# " + LOG_FIELDS_CYCLE]
    cycles = iter(ep.cycles)
    nxt = next(cycles, None)
    for s in ep.steps:
        while nxt is not None and nxt.t <= s.t:
            out.append(" ".join(["C", str(nxt.index), repr(nxt.t), nxt.signal, str(nxt.plan_index),
                                 str(int(nxt.fallback)), str(nxt.n_vertices), nxt.belief,
                                 repr(nxt.selected_clearance), str(int(nxt.theorem_ok))]))
            nxt = next(cycles, None)
        r, h = s.robot, s.human
        out.append(" ".join(["S", repr(s.t), repr(r.x), repr(r.y), repr(r.theta), repr(h.x), repr(h.y),
                             repr(h.vx), repr(h.vy), s.belief, s.signal, repr(s.barrier),
                             str(int(s.tube_breach))]))
    out.append(f"# outcome={ep.outcome} pi={ep.pi}")
    return "\n".join(out) + "\n"


def parse_log_trajectories(text: str) -> tuple[np.ndarray, np.ndarray]:
    """Robot and human positions from the S lines of a log."""
    r, h = [], []
    for line in text.splitlines():
        if line.startswith("S "):
            f = line.split()
            r.append((float(f[2]), float(f[3])))
            h.append((float(f[5]), float(f[6])))
    return np.array(r).reshape(-1, 2), np.array(h).reshape(-1, 2)


# ---------------------------------------------------------------------------
# batches

@dataclass
class BatchResult:
    reports: list[TrialReport]
    errors: list[tuple[str, str, int, float | None, str]]

    def rows(self, map_id: str | None = None, method: str | None = None,
             f_priority: float | None | str = "any") -> list[TrialReport]:
        return [r for r in self.reports
                if (map_id is None or r.map_id == map_id) and (method is None or r.method == method)
                and (f_priority == "any" or r.f_priority == f_priority)]


def run_trial(scenario: Scenario, seed: int, method: str = "full", f_priority: float | None = None,
              workers: int = 1, ctx: PlannerContext | None = None) -> tuple[Episode, TrialReport]:
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    ep = run_episode(scenario, seed=seed, baseline=method == "baseline", f_priority=f_priority,
                     workers=workers, ctx=ctx)
    return ep, make_report(ep)


def run_batch(scenarios: Sequence[Scenario], seeds: Iterable[int], sweep_f: Sequence[float | None] = (None,),
              methods: Sequence[str] = METHODS, workers: int = 1, log_dir: Path | None = None) -> BatchResult:
    """Every (scenario, method, F, seed) trial; a failing trial is recorded and skipped."""
    seeds = list(seeds)
    reports, errors = [], []
    for scn in scenarios:
        for method in methods:
            for f in sweep_f:
                eff = apply_priority(scn, f)
                ctx = PlannerContext(baseline_scenario(eff) if method == "baseline" else eff)
                for seed in seeds:
                    try:
                        ep, rep = run_trial(scn, seed, method, f, workers, ctx)
                    except Exception as exc:  # noqa: BLE001 - batch keeps going
                        errors.append((scn.map_id, method, seed, f, repr(exc)))
                        continue
                    reports.append(rep)
                    if log_dir is not None:
                        name = f"{scn.map_id}_{method}_f{'none' if f is None else f}_s{seed}.log"
                        Path(log_dir, name).write_text(format_log(ep))
    return BatchResult(reports, errors)


def _fmt(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, float):
        return "inf" if math.isinf(x) else f"{x:.3g}"
    return str(x)


def summarize(reports: Sequence[TrialReport]) -> list[dict]:
    """Min-max ranges per (map, method, F) group."""
    groups: dict[tuple, list[TrialReport]] = {}
    for r in reports:
        groups.setdefault((r.map_id, r.method, r.f_priority), []).append(r)
    out = []
    for (map_id, method, f), rows in groups.items():
        row = {"map_id": map_id, "method": method, "f_priority": f, "trials": len(rows),
               "goal": sum(r.outcome == "GOAL" for r in rows)}
        for key in ("r_cost_to_goal", "h_cost_to_goal", "rns", "hns", "pi", "pc"):
            vals = [getattr(r, key) for r in rows if getattr(r, key) is not None]
            row[key] = (min(vals), max(vals)) if vals else None
        out.append(row)
    return out


def reports_to_tsv(reports: Sequence[TrialReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(REPORT_FIELDS)
    for r in reports:
        w.writerow([_fmt(v) if isinstance(v, float) or v is None else v for v in r.as_dict().values()])
    return buf.getvalue()


def summary_to_tsv(summary: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    keys = ["map_id", "method", "f_priority", "trials", "goal", "r_cost_to_goal", "h_cost_to_goal",
            "rns", "hns", "pi", "pc"]
    w.writerow(keys)
    for row in summary:
        cells = []
        for k in keys:
            v = row[k]
            cells.append(f"{_fmt(v[0])}-{_fmt(v[1])}" if isinstance(v, tuple) else _fmt(v))
        w.writerow(cells)
    return buf.getvalue()
