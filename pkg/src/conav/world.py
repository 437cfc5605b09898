"""Scenario definition, map geometry and the occupancy-grid abstraction.

Scenario files are plain text::

    conav-scn v1
    map_id = hallway
    bounds = 0 0 12 8
    obstacle = 0 2 5 2 5 8 0 8
    ...

Blank lines and ``#`` comments are ignored. Keys may repeat only for
``obstacle`` and ``conflation``.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from .dynamics import ControlBounds, GoalDisk, HumanState, RobotState

HEADER = "conav-scn v1"
NULL_SIGNAL = "null"
MAPS_DIR = Path(__file__).parent / "maps"


class ScenarioSchemaError(ValueError):
    """Malformed scenario file."""


class ScenarioValidationError(ValueError):
    """Scenario parsed but violates an invariant."""


@dataclass(frozen=True)
class CostWeights:
    eta_R: float = 1.5
    eta_H: float = 0.25
    eta_P: float = 3.0
    eta_C: float = 1.0
    comm_costs: tuple[tuple[str, float], ...] = ()
    sigma_safe: float = 1.0

    def comm_cost(self, signal: str) -> float:
        if signal == NULL_SIGNAL:
            return 0.0
        return dict(self.comm_costs).get(signal, 1.0)


# --------------------------------------------------------------------------
# polygon geometry

def _segment_distances(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distances from points p (N,2) to segment ab."""
    ab = b - a
    denom = float(ab @ ab)
    t = np.clip(((p - a) @ ab) / denom, 0.0, 1.0) if denom > 0 else np.zeros(len(p))
    proj = a + t[:, None] * ab
    return np.hypot(*(p - proj).T)


def polygon_distance(points, poly: np.ndarray) -> np.ndarray:
    """Euclidean distance from points to a convex polygon (0 inside or on it)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(poly)
    dist = np.full(len(pts), np.inf)
    inside = np.ones(len(pts), dtype=bool)
    # orientation-agnostic inside test
    area = 0.5 * sum(poly[i, 0] * poly[(i + 1) % n, 1] - poly[(i + 1) % n, 0] * poly[i, 1]
                     for i in range(n))
    sign = 1.0 if area >= 0 else -1.0
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        dist = np.minimum(dist, _segment_distances(pts, a, b))
        cross = (b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (pts[:, 0] - a[0])
        inside &= sign * cross >= 0
    dist[inside] = 0.0
    return dist


# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    map_id: str
    bounds: tuple[float, float, float, float]
    obstacles: tuple[tuple[tuple[float, float], ...], ...]
    robot_start: RobotState
    human_start: HumanState
    robot_goal: GoalDisk
    human_goal: GoalDisk
    weights: CostWeights = CostWeights()
    comm_vocab: tuple[str, ...] = (NULL_SIGNAL, "north", "south", "east", "west")
    seed: int = 0
    dt: float = 0.1
    horizon: float = 2.0
    p_plans: int = 3
    radii: tuple[float, float] = (0.3, 0.3)
    epsilon_tube: float = 0.5
    sigma_safe: float = 1.0
    delta_neighborhood: float = 3.0
    v_max: float = 1.0
    omega_max: float = 1.5
    human_v_max: float = 1.3
    human_speed: float = 1.0
    alpha_gain: float = 1.0
    lookahead: float = 0.1
    rrt_budget: int = 120
    cell_size: float = 0.25
    step_cap: int = 2000
    conflation: tuple[tuple[str, tuple[str, ...]], ...] = ()

    @property
    def r_r(self) -> float:
        return self.radii[0]

    @property
    def r_h(self) -> float:
        return self.radii[1]

    @property
    def horizon_steps(self) -> int:
        return max(1, int(round(self.horizon / self.dt)))

    @property
    def control_bounds(self) -> ControlBounds:
        return ControlBounds(self.v_max, self.omega_max)

    @cached_property
    def obstacle_arrays(self) -> tuple[np.ndarray, ...]:
        return tuple(np.array(p, dtype=float) for p in self.obstacles)

    # ---------------------------------------------------------------- queries

    def clearance(self, points) -> np.ndarray:
        """Distance to the nearest obstacle or bounds edge (negative outside bounds)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x0, y0, x1, y1 = self.bounds
        d = np.minimum.reduce([pts[:, 0] - x0, x1 - pts[:, 0], pts[:, 1] - y0, y1 - pts[:, 1]])
        for poly in self.obstacle_arrays:
            d = np.minimum(d, polygon_distance(pts, poly))
        return d

    def freespace_mask(self, points, inflation: float) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x0, y0, x1, y1 = self.bounds
        ok = ((pts[:, 0] - inflation >= x0) & (pts[:, 0] + inflation <= x1)
              & (pts[:, 1] - inflation >= y0) & (pts[:, 1] + inflation <= y1))
        for poly in self.obstacle_arrays:
            ok &= polygon_distance(pts, poly) > inflation
        return ok

    @cached_property
    def _edges(self) -> tuple:
        out = []
        for poly in self.obstacles:
            n = len(poly)
            area = sum(poly[i][0] * poly[(i + 1) % n][1] - poly[(i + 1) % n][0] * poly[i][1]
                       for i in range(n))
            sign = 1.0 if area >= 0 else -1.0
            out.append((sign, tuple((poly[i], poly[(i + 1) % n]) for i in range(n))))
        return tuple(out)

    def point_in_freespace(self, p, inflation: float = 0.0) -> bool:
        """True iff the disk of radius `inflation` at p touches no obstacle and stays in bounds.

        Obstacle boundaries count as occupied.
        """
        px, py = float(p[0]), float(p[1])
        x0, y0, x1, y1 = self.bounds
        if px - inflation < x0 or px + inflation > x1 or py - inflation < y0 or py + inflation > y1:
            return False
        r2 = inflation * inflation
        for sign, edges in self._edges:
            inside = True
            for (ax, ay), (bx, by) in edges:
                ex, ey = bx - ax, by - ay
                wx, wy = px - ax, py - ay
                if sign * (ex * wy - ey * wx) < 0:
                    inside = False
                ee = ex * ex + ey * ey
                t = (wx * ex + wy * ey) / ee if ee > 0 else 0.0
                t = 0.0 if t < 0 else (1.0 if t > 1 else t)
                dx, dy = wx - t * ex, wy - t * ey
                if dx * dx + dy * dy <= r2:
                    return False
            if inside:
                return False
        return True

    def validate(self) -> "Scenario":
        if self.dt <= 0:
            raise ScenarioValidationError("dt > 0")
        if self.horizon < self.dt:
            raise ScenarioValidationError("horizon ≥ dt")
        if self.p_plans < 2:
            raise ScenarioValidationError("p_plans ≥ 2")
        if list(self.comm_vocab).count(NULL_SIGNAL) != 1:
            raise ScenarioValidationError("comm_vocab contains exactly one null signal")
        x0, y0, x1, y1 = self.bounds
        if not (x1 > x0 and y1 > y0):
            raise ScenarioValidationError("bounds must have positive extent")
        for poly in self.obstacles:
            if len(poly) < 3:
                raise ScenarioValidationError("obstacle polygons need ≥ 3 vertices")
        if not self.point_in_freespace((self.robot_start.x, self.robot_start.y)):
            raise ScenarioValidationError("robot_start lies outside all obstacles")
        if not self.point_in_freespace((self.human_start.x, self.human_start.y)):
            raise ScenarioValidationError("human_start lies outside all obstacles")
        for name in ("robot_goal", "human_goal"):
            if not self.point_in_freespace(getattr(self, name).center):
                raise ScenarioValidationError(f"{name} lies outside all obstacles and inside map bounds")
        if self.human_start.speed > self.human_v_max + 1e-12:
            raise ScenarioValidationError("human speed ≤ human_v_max")
        for v in (self.epsilon_tube, self.sigma_safe, self.delta_neighborhood, self.r_r, self.r_h,
                  self.v_max, self.omega_max, self.cell_size, self.alpha_gain, self.lookahead):
            if not v > 0:
                raise ScenarioValidationError("lengths, speeds and gains must be > 0")
        return self

    def with_vocab(self, vocab) -> "Scenario":
        return replace(self, comm_vocab=tuple(vocab))


# --------------------------------------------------------------------------
# grid abstraction

@dataclass(frozen=True, eq=False)
class GridAbstraction:
    """Occupancy grid; ``occupancy[row, col]`` with row 0 at ymin."""

    cell_size: float
    origin: tuple[float, float]
    occupancy: np.ndarray
    inflation: float = 0.0

    @property
    def shape(self) -> tuple[int, int]:
        return self.occupancy.shape

    def world_to_cell(self, p) -> tuple[int, int]:
        r = int(math.floor((float(p[1]) - self.origin[1]) / self.cell_size))
        c = int(math.floor((float(p[0]) - self.origin[0]) / self.cell_size))
        rows, cols = self.shape
        return min(max(r, 0), rows - 1), min(max(c, 0), cols - 1)

    def cell_to_world(self, cell) -> np.ndarray:
        r, c = cell
        return np.array([self.origin[0] + (c + 0.5) * self.cell_size,
                         self.origin[1] + (r + 0.5) * self.cell_size])

    def cell_centers(self) -> np.ndarray:
        rows, cols = self.shape
        cc, rr = np.meshgrid(np.arange(cols), np.arange(rows))
        return np.stack([self.origin[0] + (cc + 0.5) * self.cell_size,
                         self.origin[1] + (rr + 0.5) * self.cell_size], axis=-1)

    def is_free(self, cell) -> bool:
        r, c = cell
        rows, cols = self.shape
        return 0 <= r < rows and 0 <= c < cols and not self.occupancy[r, c]

    def with_occupied(self, points, radius: float) -> "GridAbstraction":
        """Copy with every cell whose center lies within `radius` of a point marked occupied."""
        occ = self.occupancy.copy()
        if len(points):
            centers = self.cell_centers()
            for p in points:
                d = np.hypot(centers[..., 0] - p[0], centers[..., 1] - p[1])
                occ |= d <= radius
                occ[self.world_to_cell(p)] = True
        return GridAbstraction(self.cell_size, self.origin, occ, self.inflation)


def build_grid(scenario: Scenario, cell_size: float | None = None,
               inflation: float | None = None) -> GridAbstraction:
    """Occupancy grid over the scenario bounds, sampled at cell centers.

    A cell is free iff its center passes ``point_in_freespace`` with the given
    inflation (human radius by default).
    """
    cell_size = scenario.cell_size if cell_size is None else cell_size
    inflation = scenario.r_h if inflation is None else inflation
    if cell_size <= 0:
        raise ValueError("cell_size must be > 0")
    x0, y0, x1, y1 = scenario.bounds
    if cell_size > x1 - x0 or cell_size > y1 - y0:
        raise ValueError("cell_size larger than map extent")
    cols = int(math.ceil((x1 - x0) / cell_size - 1e-9))
    rows = int(math.ceil((y1 - y0) / cell_size - 1e-9))
    grid = GridAbstraction(cell_size, (x0, y0), np.zeros((rows, cols), dtype=bool), inflation)
    centers = grid.cell_centers().reshape(-1, 2)
    free = scenario.freespace_mask(centers, inflation).reshape(rows, cols)
    return GridAbstraction(cell_size, (x0, y0), ~free, inflation)


# --------------------------------------------------------------------------
# file format

_FLOAT_KEYS = ("dt", "horizon", "epsilon_tube", "sigma_safe", "delta_neighborhood", "v_max",
               "omega_max", "human_v_max", "human_speed", "alpha_gain", "lookahead", "cell_size")
_INT_KEYS = ("seed", "p_plans", "rrt_budget", "step_cap")
_WEIGHT_KEYS = ("eta_R", "eta_H", "eta_P", "eta_C")


def _floats(raw: str, n: int | None, key: str, lineno: int) -> list[float]:
    try:
        vals = [float(t) for t in raw.split()]
    except ValueError:
        raise ScenarioSchemaError(f"line {lineno}: field '{key}' expects numbers, got {raw!r}") from None
    if n is not None and len(vals) != n:
        raise ScenarioSchemaError(f"line {lineno}: field '{key}' expects {n} numbers, got {len(vals)}")
    return vals


def parse_scenario(text: str, validate: bool = True) -> Scenario:
    lines = text.splitlines()
    body = [(i + 1, ln.split("#", 1)[0].strip()) for i, ln in enumerate(lines)]
    body = [(i, ln) for i, ln in body if ln]
    if not body or body[0][1] != HEADER:
        raise ScenarioSchemaError(f"line 1: expected header '{HEADER}'")
    kw: dict = {}
    obstacles = []
    comm_costs = {}
    weights = {}
    conflation = []
    seen = set()
    for lineno, ln in body[1:]:
        if "=" not in ln:
            raise ScenarioSchemaError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in ln.split("=", 1))
        if key not in ("obstacle", "conflation"):
            if key in seen:
                raise ScenarioSchemaError(f"line {lineno}: duplicate field '{key}'")
            seen.add(key)
        if key == "map_id":
            kw["map_id"] = raw
        elif key == "bounds":
            kw["bounds"] = tuple(_floats(raw, 4, key, lineno))
        elif key == "obstacle":
            v = _floats(raw, None, key, lineno)
            if len(v) < 6 or len(v) % 2:
                raise ScenarioSchemaError(f"line {lineno}: field 'obstacle' needs ≥ 3 x y pairs")
            obstacles.append(tuple((v[i], v[i + 1]) for i in range(0, len(v), 2)))
        elif key == "robot_start":
            kw["robot_start"] = RobotState(*_floats(raw, 3, key, lineno))
        elif key == "human_start":
            v = _floats(raw, None, key, lineno)
            if len(v) not in (2, 4):
                raise ScenarioSchemaError(f"line {lineno}: field 'human_start' expects 2 or 4 numbers")
            kw["human_start"] = HumanState(*v)
        elif key in ("robot_goal", "human_goal"):
            x, y, r = _floats(raw, 3, key, lineno)
            try:
                kw[key] = GoalDisk((x, y), r)
            except ValueError as e:
                raise ScenarioValidationError(f"{key}: {e}") from None
        elif key == "radii":
            kw["radii"] = tuple(_floats(raw, 2, key, lineno))
        elif key == "comm_vocab":
            kw["comm_vocab"] = tuple(raw.split())
        elif key in _FLOAT_KEYS:
            kw[key] = _floats(raw, 1, key, lineno)[0]
        elif key in _INT_KEYS:
            try:
                kw[key] = int(raw)
            except ValueError:
                raise ScenarioSchemaError(f"line {lineno}: field '{key}' expects an integer") from None
        elif key.startswith("weights."):
            name = key.split(".", 1)[1]
            if name not in _WEIGHT_KEYS:
                raise ScenarioSchemaError(f"line {lineno}: unknown weight '{name}'")
            weights[name] = _floats(raw, 1, key, lineno)[0]
        elif key.startswith("comm_cost."):
            comm_costs[key.split(".", 1)[1]] = _floats(raw, 1, key, lineno)[0]
        elif key == "conflation":
            # conflation = <observation> : <signal> <signal> ...
            if ":" not in raw:
                raise ScenarioSchemaError(f"line {lineno}: conflation expects 'obs : sig sig'")
            obs, sigs = raw.split(":", 1)
            conflation.append((obs.strip(), tuple(sigs.split())))
        else:
            raise ScenarioSchemaError(f"line {lineno}: unknown field '{key}'")
    for req in ("map_id", "bounds", "robot_start", "human_start", "robot_goal", "human_goal"):
        if req not in kw:
            raise ScenarioSchemaError(f"missing required field '{req}'")
    kw["obstacles"] = tuple(obstacles)
    kw["conflation"] = tuple(conflation)
    sigma = kw.get("sigma_safe", Scenario.sigma_safe)
    kw["weights"] = CostWeights(comm_costs=tuple(sorted(comm_costs.items())), sigma_safe=sigma,
                                **weights)
    scn = Scenario(**kw)
    return scn.validate() if validate else scn


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.exists() and not path.suffix and (MAPS_DIR / f"{path}.scn").exists():
        path = MAPS_DIR / f"{path}.scn"
    return parse_scenario(path.read_text())


def builtin_scenario(name: str) -> Scenario:
    return load_scenario(MAPS_DIR / f"{name}.scn")


def _num(v: float) -> str:
    return repr(float(v))


def dump_scenario(s: Scenario) -> str:
    out = [HEADER, f"map_id = {s.map_id}", "bounds = " + " ".join(map(_num, s.bounds))]
    for poly in s.obstacles:
        out.append("obstacle = " + " ".join(_num(c) for xy in poly for c in xy))
    out.append(f"robot_start = {_num(s.robot_start.x)} {_num(s.robot_start.y)} {_num(s.robot_start.theta)}")
    h = s.human_start
    out.append(f"human_start = {_num(h.x)} {_num(h.y)} {_num(h.vx)} {_num(h.vy)}")
    for key in ("robot_goal", "human_goal"):
        g = getattr(s, key)
        out.append(f"{key} = {_num(g.center[0])} {_num(g.center[1])} {_num(g.radius)}")
    out.append("radii = " + " ".join(map(_num, s.radii)))
    out.append("comm_vocab = " + " ".join(s.comm_vocab))
    for key in _FLOAT_KEYS:
        out.append(f"{key} = {_num(getattr(s, key))}")
    for key in _INT_KEYS:
        out.append(f"{key} = {getattr(s, key)}")
    for key in _WEIGHT_KEYS:
        out.append(f"weights.{key} = {_num(getattr(s.weights, key))}")
    for sig, c in s.weights.comm_costs:
        out.append(f"comm_cost.{sig} = {_num(c)}")
    for obs, sigs in s.conflation:
        out.append(f"conflation = {obs} : {' '.join(sigs)}")
    return "\n".join(out) + "\n"


def scenario_digest(s: Scenario) -> str:
    import hashlib
    return hashlib.sha256(dump_scenario(s).encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# grid search

SQRT2 = math.sqrt(2.0)
_MOVES = ((1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
          (1, 1, SQRT2), (1, -1, SQRT2), (-1, 1, SQRT2), (-1, -1, SQRT2))


def _neighbors(occ: np.ndarray, r: int, c: int):
    rows, cols = occ.shape
    for dr, dc, w in _MOVES:
        nr, nc = r + dr, c + dc
        if not (0 <= nr < rows and 0 <= nc < cols) or occ[nr, nc]:
            continue
        # no corner cutting through occupied cells
        if dr and dc and (occ[r + dr, c] or occ[r, c + dc]):
            continue
        yield nr, nc, w


def octile(a, b) -> float:
    dr, dc = abs(a[0] - b[0]), abs(a[1] - b[1])
    return (dr + dc) + (SQRT2 - 2.0) * min(dr, dc)


def astar(grid: GridAbstraction, start: tuple[int, int], goal: tuple[int, int]) -> list[tuple[int, int]]:
    """8-connected A* (octile heuristic, ties broken toward larger g). Empty list if unreachable."""
    occ = grid.occupancy
    if not grid.is_free(start) or not grid.is_free(goal):
        return []
    g_best = {start: 0.0}
    parent = {start: None}
    counter = 0
    heap = [(octile(start, goal), 0.0, counter, start)]
    closed = set()
    while heap:
        _, neg_g, _, cur = heapq.heappop(heap)
        if cur in closed:
            continue
        if cur == goal:
            path = []
            while cur is not None:
                path.append(cur)
                cur = parent[cur]
            return path[::-1]
        closed.add(cur)
        g = -neg_g
        for nr, nc, w in _neighbors(occ, *cur):
            nb = (nr, nc)
            ng = g + w
            if ng < g_best.get(nb, math.inf) - 1e-12:
                g_best[nb] = ng
                parent[nb] = cur
                counter += 1
                heapq.heappush(heap, (ng + octile(nb, goal), -ng, counter, nb))
    return []


def distance_field(grid: GridAbstraction, goal_cell: tuple[int, int]) -> np.ndarray:
    """Octile Dijkstra cost-to-go (in cells) from every cell to `goal_cell`; inf if unreachable."""
    occ = grid.occupancy
    dist = np.full(occ.shape, np.inf)
    if not grid.is_free(goal_cell):
        return dist
    dist[goal_cell] = 0.0
    heap = [(0.0, goal_cell)]
    while heap:
        d, cur = heapq.heappop(heap)
        if d > dist[cur]:
            continue
        for nr, nc, w in _neighbors(occ, *cur):
            nd = d + w
            if nd < dist[nr, nc]:
                dist[nr, nc] = nd
                heapq.heappush(heap, (nd, (nr, nc)))
    return dist


def descend_field(grid: GridAbstraction, field: np.ndarray, start: tuple[int, int],
                  max_len: int = 100000) -> list[tuple[int, int]]:
    """Shortest cell path from `start` by following a distance field downhill."""
    if not np.isfinite(field[start]):
        return []
    path = [start]
    cur = start
    while field[cur] > 0 and len(path) < max_len:
        best = None
        for nr, nc, w in _neighbors(grid.occupancy, *cur):
            val = w + field[nr, nc]
            if best is None or val < best[0] - 1e-12:
                best = (val, (nr, nc))
        if best is None:
            return []
        cur = best[1]
        path.append(cur)
    return path


def cells_to_world(grid: GridAbstraction, cells) -> np.ndarray:
    if not len(cells):
        return np.zeros((0, 2))
    rc = np.asarray(cells, dtype=float)
    return np.stack([grid.origin[0] + (rc[:, 1] + 0.5) * grid.cell_size,
                     grid.origin[1] + (rc[:, 0] + 0.5) * grid.cell_size], axis=1)


def nearest_free_cell(grid: GridAbstraction, p) -> tuple[int, int] | None:
    """Cell containing p if free, else the free cell whose center is closest to p."""
    cell = grid.world_to_cell(p)
    if grid.is_free(cell):
        return cell
    free = np.argwhere(~grid.occupancy)
    if not len(free):
        return None
    centers = cells_to_world(grid, free)
    i = int(np.argmin(np.hypot(centers[:, 0] - p[0], centers[:, 1] - p[1])))
    return tuple(int(v) for v in free[i])


def polyline_length(points) -> float:
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        return 0.0
    return float(np.sum(np.hypot(*np.diff(pts, axis=0).T)))


def resample_polyline(points, spacing: float) -> np.ndarray:
    """Points every `spacing` meters of arc length, keeping both endpoints."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        return pts.copy()
    seg = np.hypot(*np.diff(pts, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if total == 0:
        return pts[:1].copy()
    n = int(math.floor(total / spacing + 1e-9))
    targets = np.arange(1, n + 1) * spacing
    if not len(targets) or targets[-1] < total - 1e-9:
        targets = np.append(targets, total)
    targets = np.concatenate([[0.0], targets])
    x = np.interp(targets, s, pts[:, 0])
    y = np.interp(targets, s, pts[:, 1])
    return np.stack([x, y], axis=1)


def grid_path_world(grid: GridAbstraction, cells, start_point=None, end_point=None) -> np.ndarray:
    """World polyline of a cell path, optionally pinned to exact start/end points."""
    pts = cells_to_world(grid, cells)
    if not len(pts):
        return pts
    if start_point is not None:
        pts[0] = start_point
    if end_point is not None and len(pts) > 1:
        pts[-1] = end_point
    return pts
