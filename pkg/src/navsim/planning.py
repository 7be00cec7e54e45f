"""Two-loop planner: grid global path + reactive local waypoints.

Global loop (low rate): crop + inflate the projected grid, run jump point
search for the shortest 8-connected path, and extract a short-horizon local
goal along the tangent of a quadratic Bezier through the first three
waypoints. Local loop (high rate): pick the next waypoint by angular search
around the goal bearing, fit a minimum-acceleration cubic to it, and sample
that into velocity commands. When no safe direction exists, a braking
backup primitive holds the vehicle while the global loop replans.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .config import PlannerConfig
from .mapping import FREE, OCCUPIED, UNKNOWN, EsdfMap2D, LocalCylindricalMap, ProjectedGrid2D, query_distance_gradient

SQRT2 = math.sqrt(2.0)


class NoPathError(RuntimeError):
    pass


def _clamp_norm(vec: np.ndarray, limit: float) -> np.ndarray:
    n = float(np.linalg.norm(vec))
    if n > limit and n > 0.0:
        return vec * (limit / n)
    return vec


# --- grid preprocessing -----------------------------------------------------


@dataclass(frozen=True)
class PlanningGrid:
    """Cropped, inflated binary grid for path finding."""

    blocked: np.ndarray  # bool[ix, iy]
    origin_xy: np.ndarray
    cell_size: float

    def __post_init__(self):
        object.__setattr__(self, "origin_xy", np.asarray(self.origin_xy, dtype=float))

    @property
    def shape(self) -> tuple:
        return self.blocked.shape

    def cell_of(self, xy) -> tuple:
        rel = (np.asarray(xy, dtype=float) - self.origin_xy) / self.cell_size
        return int(math.floor(rel[0])), int(math.floor(rel[1]))

    def center(self, cell) -> np.ndarray:
        return self.origin_xy + (np.asarray(cell, dtype=float) + 0.5) * self.cell_size

    def in_bounds(self, i: int, j: int) -> bool:
        return 0 <= i < self.blocked.shape[0] and 0 <= j < self.blocked.shape[1]

    def walkable(self, i: int, j: int) -> bool:
        return self.in_bounds(i, j) and not self.blocked[i, j]


def disk_offsets(radius_cells: float) -> np.ndarray:
    """Integer offsets within a Euclidean disk of the given cell radius."""
    r = int(math.ceil(radius_cells))
    out = []
    for di in range(-r, r + 1):
        for dj in range(-r, r + 1):
            if di * di + dj * dj <= radius_cells * radius_cells:
                out.append((di, dj))
    return np.asarray(out, dtype=np.int64)


def preprocess_grid(grid: ProjectedGrid2D, inflation_radius: float, unknown_as_occupied: bool = False,
                    include_xy=(), margin_cells: int = 1) -> PlanningGrid:
    """Crop to the observed bounding box (+margin) and dilate occupied cells
    with a Euclidean disk of the inflation radius.

    ``include_xy`` points (the active start and goal) always stay inside the
    crop. The margin must exceed the inflation radius when routes may detour
    through unobserved space, or the crop edge itself seals the detour."""
    observed = grid.cells != UNKNOWN
    nx, ny = grid.shape
    m = max(int(margin_cells), 1)
    if observed.any():
        xs, ys = np.nonzero(observed)
        i0 = max(int(xs.min()) - m, 0)
        i1 = min(int(xs.max()) + 1 + m, nx)
        j0 = max(int(ys.min()) - m, 0)
        j1 = min(int(ys.max()) + 1 + m, ny)
        for xy in include_xy:
            ci, cj = grid.cell_of(xy)
            i0 = min(i0, max(ci - 1, 0))
            i1 = max(i1, min(ci + 2, nx))
            j0 = min(j0, max(cj - 1, 0))
            j1 = max(j1, min(cj + 2, ny))
    else:
        i0, i1, j0, j1 = 0, nx, 0, ny
    sub = grid.cells[i0:i1, j0:j1]
    blocked = sub == OCCUPIED
    if unknown_as_occupied:
        blocked = blocked | (sub == UNKNOWN)
    occ_i, occ_j = np.nonzero(sub == OCCUPIED)
    if occ_i.size and inflation_radius > 0.0:
        blocked = blocked.copy()
        offs = disk_offsets(inflation_radius / grid.cell_size)
        ii = occ_i[:, None] + offs[None, :, 0]
        jj = occ_j[:, None] + offs[None, :, 1]
        keep = (ii >= 0) & (ii < blocked.shape[0]) & (jj >= 0) & (jj < blocked.shape[1])
        blocked[ii[keep], jj[keep]] = True
    origin = grid.origin_xy + np.array([i0, j0]) * grid.cell_size
    return PlanningGrid(blocked, origin, grid.cell_size)


# --- jump point search --------------------------------------------------------
#
# 8-connected shortest path with diagonal cost sqrt(2). Diagonal steps are
# permitted past corners (the classic formulation); the Dijkstra oracle in
# the tests uses the identical neighbor rule. Costs are tracked as integer
# (straight, diagonal) step counts so comparisons against the oracle are
# exact.


@dataclass(frozen=True)
class GlobalPath:
    waypoints: np.ndarray  # (N, 2) world meters
    cells: tuple  # jump-point cells
    n_straight: int
    n_diagonal: int
    goal_relocated: bool = False

    @property
    def cost_cells(self) -> float:
        return self.n_straight + self.n_diagonal * SQRT2

    @property
    def length(self) -> float:
        if len(self.waypoints) < 2:
            return 0.0
        return float(np.sum(np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)))


def _jump(blocked, i, j, di, dj, gi, gj):
    """Next jump point from (i, j) moving (di, dj), or None."""
    nx, ny = blocked.shape

    def walk(i, j):
        return 0 <= i < nx and 0 <= j < ny and not blocked[i, j]

    while True:
        i += di
        j += dj
        if not walk(i, j):
            return None
        if i == gi and j == gj:
            return (i, j)
        if di != 0 and dj != 0:
            if (walk(i - di, j + dj) and not walk(i - di, j)) or (
                walk(i + di, j - dj) and not walk(i, j - dj)
            ):
                return (i, j)
            if _jump(blocked, i, j, di, 0, gi, gj) is not None:
                return (i, j)
            if _jump(blocked, i, j, 0, dj, gi, gj) is not None:
                return (i, j)
        elif di != 0:
            if (walk(i + di, j + 1) and not walk(i, j + 1)) or (
                walk(i + di, j - 1) and not walk(i, j - 1)
            ):
                return (i, j)
        else:
            if (walk(i + 1, j + dj) and not walk(i + 1, j)) or (
                walk(i - 1, j + dj) and not walk(i - 1, j)
            ):
                return (i, j)


def _pruned_directions(blocked, i, j, pdi, pdj):
    """Natural + forced successor directions given the arrival direction."""
    nx, ny = blocked.shape

    def walk(i, j):
        return 0 <= i < nx and 0 <= j < ny and not blocked[i, j]

    if pdi == 0 and pdj == 0:  # start node: expand everywhere
        return [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)]
    dirs = []
    if pdi != 0 and pdj != 0:
        if walk(i + pdi, j):
            dirs.append((pdi, 0))
        if walk(i, j + pdj):
            dirs.append((0, pdj))
        if walk(i + pdi, j + pdj):
            dirs.append((pdi, pdj))
        if not walk(i - pdi, j) and walk(i - pdi, j + pdj):
            dirs.append((-pdi, pdj))
        if not walk(i, j - pdj) and walk(i + pdi, j - pdj):
            dirs.append((pdi, -pdj))
    elif pdi != 0:
        if walk(i + pdi, j):
            dirs.append((pdi, 0))
        if not walk(i, j + 1) and walk(i + pdi, j + 1):
            dirs.append((pdi, 1))
        if not walk(i, j - 1) and walk(i + pdi, j - 1):
            dirs.append((pdi, -1))
    else:
        if walk(i, j + pdj):
            dirs.append((0, pdj))
        if not walk(i + 1, j) and walk(i + 1, j + pdj):
            dirs.append((1, pdj))
        if not walk(i - 1, j) and walk(i - 1, j + pdj):
            dirs.append((-1, pdj))
    return dirs


def _octile(i, j, gi, gj):
    di = abs(i - gi)
    dj = abs(j - gj)
    return (di + dj) + (SQRT2 - 2.0) * min(di, dj)


def jps_search(blocked: np.ndarray, start: tuple, goal: tuple):
    """Jump point search between cells; returns (cells, n_straight, n_diag)
    or raises NoPathError."""
    si, sj = start
    gi, gj = goal
    if blocked[si, sj]:
        raise NoPathError("start cell is blocked")
    if blocked[gi, gj]:
        raise NoPathError("goal cell is blocked")
    if start == goal:
        return [start], 0, 0

    g: dict = {start: (0, 0)}  # (straight, diagonal) step counts
    parent: dict = {start: None}
    arrive: dict = {start: (0, 0)}
    openq = [(
        _octile(si, sj, gi, gj), 0.0, start)]
    closed = set()
    while openq:
        f, gval, node = heapq.heappop(openq)
        if node in closed:
            continue
        closed.add(node)
        if node == goal:
            cells = []
            cur = node
            while cur is not None:
                cells.append(cur)
                cur = parent[cur]
            cells.reverse()
            ns, nd = g[node]
            return cells, ns, nd
        i, j = node
        pdi, pdj = arrive[node]
        for di, dj in _pruned_directions(blocked, i, j, pdi, pdj):
            jp = _jump(blocked, i, j, di, dj, gi, gj)
            if jp is None:
                continue
            steps = max(abs(jp[0] - i), abs(jp[1] - j))
            ns, nd = g[node]
            if di != 0 and dj != 0:
                cand = (ns, nd + steps)
            else:
                cand = (ns + steps, nd)
            cand_cost = cand[0] + cand[1] * SQRT2
            if jp not in g or cand_cost < g[jp][0] + g[jp][1] * SQRT2 - 1e-12:
                g[jp] = cand
                parent[jp] = node
                arrive[jp] = (di, dj)
                heapq.heappush(openq, (cand_cost + _octile(jp[0], jp[1], gi, gj), cand_cost, jp))
    raise NoPathError("start and goal are in disconnected free regions")


def nearest_free_cell(grid: PlanningGrid, cell: tuple, max_radius: float):
    """Closest walkable cell within max_radius meters of cell, or None."""
    max_cells = max_radius / grid.cell_size
    r = int(math.ceil(max_cells))
    best = None
    best_d2 = np.inf
    for di in range(-r, r + 1):
        for dj in range(-r, r + 1):
            d2 = di * di + dj * dj
            if d2 > max_cells * max_cells or d2 >= best_d2:
                continue
            i, j = cell[0] + di, cell[1] + dj
            if grid.walkable(i, j):
                best = (i, j)
                best_d2 = d2
    return best


def jps_plan(grid: PlanningGrid, start_xy, goal_xy, relocate_radius: float = 1.0) -> GlobalPath:
    """Shortest grid path between world points. A blocked/unknown goal cell
    is relocated to the nearest free cell within ``relocate_radius`` and the
    result flagged."""
    start = grid.cell_of(start_xy)
    if not grid.in_bounds(*start):
        raise NoPathError(f"start {tuple(np.round(start_xy, 3))} outside the planning grid")
    if not grid.walkable(*start):
        raise NoPathError("start cell is blocked on the inflated grid")
    goal = grid.cell_of(goal_xy)
    if not grid.in_bounds(*goal):
        goal = (min(max(goal[0], 0), grid.shape[0] - 1), min(max(goal[1], 0), grid.shape[1] - 1))
    relocated = False
    if not grid.walkable(*goal):
        moved = nearest_free_cell(grid, goal, relocate_radius)
        if moved is None:
            raise NoPathError("goal cell blocked and no free cell within the relocation radius")
        goal = moved
        relocated = True
    cells, ns, nd = jps_search(grid.blocked, start, goal)
    waypoints = np.array([grid.center(c) for c in cells])
    return GlobalPath(waypoints, tuple(cells), ns, nd, relocated)


# --- local goal -----------------------------------------------------------------


@dataclass(frozen=True)
class LocalGoal:
    point: np.ndarray  # (3,) world meters
    heading: float


def bezier_local_goal(path: GlobalPath, vehicle_xy, cruise_alt: float, lookahead: float) -> LocalGoal:
    """Short-horizon goal on the tangent of the quadratic Bezier through the
    first three path waypoints (tangent at t=0 is 2(P1-P0)); degrades to a
    straight-line goal for shorter paths."""
    wps = path.waypoints
    vehicle_xy = np.asarray(vehicle_xy, dtype=float)
    if len(wps) == 0:
        raise ValueError("path has no waypoints")
    p0 = wps[0]
    remainder = path.length
    if len(wps) >= 3:
        tangent = 2.0 * (wps[1] - p0)  # B'(0) of the quadratic Bezier
    elif len(wps) == 2:
        tangent = wps[1] - p0
    else:
        tangent = p0 - vehicle_xy
    n = np.linalg.norm(tangent)
    if n < 1e-9:
        point = np.array([p0[0], p0[1], cruise_alt])
        return LocalGoal(point, 0.0)
    d = tangent / n
    if len(wps) >= 2:
        step = min(lookahead, float(np.linalg.norm(vehicle_xy - p0)) + remainder)
        goal_xy = p0 + d * step
    else:
        # single waypoint: head straight for it, never past it
        dist = float(np.linalg.norm(p0 - vehicle_xy))
        goal_xy = vehicle_xy + d * min(lookahead, dist)
    return LocalGoal(np.array([goal_xy[0], goal_xy[1], cruise_alt]), float(math.atan2(d[1], d[0])))


# --- heuristic angular search ------------------------------------------------------


def angular_offsets(delta: float, delta_max: float):
    """0, +d, -d, +2d, -2d, ... up to delta_max; positive side first on ties."""
    yield 0.0
    k = 1
    while k * delta <= delta_max + 1e-12:
        yield k * delta
        yield -k * delta
        k += 1


def _corridor_blocked(obstacles_world: np.ndarray, pads: np.ndarray, a: np.ndarray, b: np.ndarray,
                      radius: float) -> bool:
    """True when any obstacle cell comes within radius (+ its own half
    diagonal) of segment a-b."""
    if obstacles_world.shape[0] == 0:
        return False
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-12:
        d2 = np.sum((obstacles_world - a) ** 2, axis=1)
    else:
        t = np.clip((obstacles_world - a) @ ab / denom, 0.0, 1.0)
        closest = a + t[:, None] * ab
        d2 = np.sum((obstacles_world - closest) ** 2, axis=1)
    reach = radius + pads
    return bool((d2 <= reach * reach).any())


def _esdf_corridor_clear(esdf: EsdfMap2D, a: np.ndarray, b: np.ndarray, threshold: float) -> bool:
    """ESDF clearance >= threshold at half-cell samples along segment a-b."""
    n = max(int(math.ceil(np.linalg.norm(b[:2] - a[:2]) / (0.5 * esdf.cell_size))), 1)
    for k in range(1, n + 1):
        p = a[:2] + (b[:2] - a[:2]) * (k / n)
        try:
            d, _ = query_distance_gradient(esdf, p)
        except ValueError:
            return False  # leaves the mapped area
        if d < threshold:
            return False
    return True


def heuristic_angular_search(
    local_map: LocalCylindricalMap,
    esdf: EsdfMap2D,
    vehicle_pos,
    local_goal: LocalGoal,
    params: PlannerConfig,
    corridor_radius: float,
):
    """First safe waypoint scanning angular offsets outward from the goal
    bearing (positive offset wins ties), with level/up/down tilt tiers per
    offset. Safe = swept corridor clear of local-map hits (current view) and
    ESDF clearance >= safe_radius along the corridor (map memory: the camera
    forgets what leaves its field of view, the ESDF does not). None when
    everything is blocked."""
    vehicle_pos = np.asarray(vehicle_pos, dtype=float)
    to_goal = local_goal.point - vehicle_pos
    bearing = math.atan2(to_goal[1], to_goal[0])
    horiz = float(np.linalg.norm(to_goal[:2]))
    L = min(params.has_step, horiz or params.has_step)
    # base pitch follows the 3-D bearing to the local goal (which carries the
    # cruise altitude), so altitude errors decay instead of locking in
    pitch = math.atan2(to_goal[2], max(horiz, 1e-6))
    pitch = min(max(pitch, -params.has_vertical_tilt), params.has_vertical_tilt)
    obstacles, pads = local_map.occupied_cells_world()
    tilts = (0.0, params.has_vertical_tilt, -params.has_vertical_tilt)
    # never demand more clearance than the vehicle currently has, or escape
    # from a tight spot becomes impossible
    try:
        d_here, _ = query_distance_gradient(esdf, vehicle_pos[:2])
    except ValueError:
        d_here = np.inf
    threshold = min(params.safe_radius, max(0.98 * d_here, 0.05))
    for off in angular_offsets(params.has_delta, params.has_delta_max):
        ang = bearing + off
        for tilt in tilts:
            el = pitch + tilt
            d = np.array([
                math.cos(ang) * math.cos(el),
                math.sin(ang) * math.cos(el),
                math.sin(el),
            ])
            cand = vehicle_pos + L * d
            if not (params.flight_z_min <= cand[2] <= params.flight_z_max):
                continue
            if _corridor_blocked(obstacles, pads, vehicle_pos, cand, corridor_radius):
                continue
            if not _esdf_corridor_clear(esdf, vehicle_pos, cand, threshold):
                continue
            # below safe_radius movement must not lose clearance (escape only)
            try:
                d_end, _ = query_distance_gradient(esdf, cand[:2])
            except ValueError:
                continue
            if d_end < min(params.safe_radius, max(d_here, 0.05)):
                continue
            return cand
    return None


# --- minimum-acceleration primitives --------------------------------------------


@dataclass(frozen=True)
class MotionPrimitive:
    """Per-axis cubic in the position basis: p(t) = c0 + c1 t + c2 t^2 + c3 t^3."""

    coeffs: np.ndarray  # (3, 4)
    duration: float
    start_time: float = 0.0

    def position(self, t: float) -> np.ndarray:
        t = min(max(t, 0.0), self.duration)
        c = self.coeffs
        return c[:, 0] + t * (c[:, 1] + t * (c[:, 2] + t * c[:, 3]))

    def velocity(self, t: float) -> np.ndarray:
        t = min(max(t, 0.0), self.duration)
        c = self.coeffs
        return c[:, 1] + t * (2.0 * c[:, 2] + 3.0 * t * c[:, 3])

    def acceleration(self, t: float) -> np.ndarray:
        t = min(max(t, 0.0), self.duration)
        c = self.coeffs
        return 2.0 * c[:, 2] + 6.0 * t * c[:, 3]

    def accel_cost(self) -> float:
        """Integral of squared acceleration over [0, T], closed form."""
        T = self.duration
        c2 = self.coeffs[:, 2]
        c3 = self.coeffs[:, 3]
        return float(np.sum(4.0 * c2 * c2 * T + 12.0 * c2 * c3 * T * T + 12.0 * c3 * c3 * T**3))

    def max_speed(self, sample_dt: float = 1e-3) -> float:
        ts = np.arange(0.0, self.duration + sample_dt, sample_dt)
        ts[-1] = self.duration
        c = self.coeffs
        v = c[None, :, 1] + ts[:, None] * (2.0 * c[None, :, 2] + 3.0 * ts[:, None] * c[None, :, 3])
        return float(np.sqrt((v * v).sum(axis=1)).max())


def min_acc_primitive(p0, v0, p1, v1, T: float, t_min: float = 1e-3, start_time: float = 0.0) -> MotionPrimitive:
    """Cubic minimizing integral |a|^2 with fixed endpoint position and
    velocity. The cubic is the exact optimum (the Euler-Lagrange equation
    forces a vanishing fourth derivative), so coefficients come straight
    from Hermite boundary conditions."""
    if T <= 0.0:
        raise ValueError("T must be > 0")
    if T < t_min:
        raise ValueError(f"degenerate duration T={T} < t_min={t_min}")
    p0 = np.asarray(p0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    v1 = np.asarray(v1, dtype=float)
    dp = p1 - p0 - v0 * T
    dv = v1 - v0
    c3 = (dv * T - 2.0 * dp) / T**3
    c2 = (3.0 * dp - dv * T) / T**2
    coeffs = np.column_stack([p0, v0, c2, c3])
    return MotionPrimitive(coeffs, float(T), start_time)


def backup_plan(position, velocity, decel: float = 1.0, t_min: float = 0.25, start_time: float = 0.0) -> MotionPrimitive:
    """Brake-to-hover primitive at the current position: terminal velocity 0
    with the stop point placed so speed decays linearly (never increasing)."""
    p = np.asarray(position, dtype=float)
    v = np.asarray(velocity, dtype=float)
    speed = float(np.linalg.norm(v))
    T = max(speed / decel, t_min)
    p_stop = p + v * (T / 2.0)
    return min_acc_primitive(p, v, p_stop, np.zeros(3), T, start_time=start_time)


# --- planner orchestration --------------------------------------------------------


@dataclass
class PlannerStatus:
    goal_xy: np.ndarray | None = None
    path: GlobalPath | None = None
    local_goal: LocalGoal | None = None
    primitive: MotionPrimitive | None = None
    backup_active: bool = False
    last_event: str = ""


class Planner:
    """Holds planner state across the two loops; the runtime schedules
    ``global_step`` and ``local_step`` at their configured rates."""

    def __init__(self, params: PlannerConfig, speed_limit: float, inflation_radius: float):
        self.params = params
        self.speed_limit = speed_limit
        self.inflation_radius = inflation_radius
        self.status = PlannerStatus()

    def set_goal(self, goal_xy):
        self.status.goal_xy = np.asarray(goal_xy, dtype=float)
        self.status.path = None
        self.status.local_goal = None
        self.status.last_event = "new_goal"

    def clear_goal(self):
        self.status = PlannerStatus()

    def goal_reached(self, vehicle_xy) -> bool:
        g = self.status.goal_xy
        if g is None:
            return False
        return float(np.linalg.norm(np.asarray(vehicle_xy, dtype=float) - g)) <= self.params.goal_reach_dist

    def global_step(self, grid2d: ProjectedGrid2D, vehicle_xy) -> LocalGoal | None:
        """Replan the global path and refresh the local goal."""
        if self.status.goal_xy is None:
            return None
        margin = int(math.ceil(self.inflation_radius / grid2d.cell_size)) + 4
        pgrid = preprocess_grid(grid2d, self.inflation_radius, unknown_as_occupied=False,
                                include_xy=(vehicle_xy, self.status.goal_xy), margin_cells=margin)
        start_cell = pgrid.cell_of(vehicle_xy)
        start_xy = np.asarray(vehicle_xy, dtype=float)
        if pgrid.in_bounds(*start_cell) and not pgrid.walkable(*start_cell):
            # vehicle sits inside an inflated cell; plan from the nearest free one
            moved = nearest_free_cell(pgrid, start_cell, self.params.goal_relocate_radius)
            if moved is None:
                self.status.last_event = "start_trapped"
                return None
            start_xy = pgrid.center(moved)
        try:
            path = jps_plan(pgrid, start_xy, self.status.goal_xy, self.params.goal_relocate_radius)
        except NoPathError as e:
            self.status.path = None
            self.status.local_goal = None
            self.status.last_event = f"no_path: {e}"
            return None
        self.status.path = path
        self.status.local_goal = bezier_local_goal(path, vehicle_xy, self.params.cruise_alt, self.params.lookahead)
        return self.status.local_goal

    def local_step(self, local_map: LocalCylindricalMap, esdf: EsdfMap2D, position, velocity, t: float):
        """Pick the next waypoint and keep a primitive active toward it.

        The active primitive is sampled by the command path every control
        period; it is only regenerated when it has mostly played out, its
        target moved, or safety demands a backup. Re-anchoring every tick
        would reduce the command to an echo of the current velocity.
        """
        p = self.params
        lg = self.status.local_goal
        if lg is None or self.status.goal_xy is None:
            return self.status.primitive
        vehicle = np.asarray(position, dtype=float)
        # estimate noise can report speeds the vehicle cannot fly
        velocity = _clamp_norm(np.asarray(velocity, dtype=float), self.speed_limit)
        goal_vec = self.status.goal_xy - vehicle[:2]
        near_goal = float(np.linalg.norm(goal_vec)) <= p.goal_reach_dist + p.has_step
        target = None
        if near_goal:
            cand = np.array([self.status.goal_xy[0], self.status.goal_xy[1], p.cruise_alt])
            obstacles, pads = local_map.occupied_cells_world()
            if not _corridor_blocked(obstacles, pads, vehicle, cand, self.inflation_radius) \
                    and _esdf_corridor_clear(esdf, vehicle, cand, 0.05):
                target = cand
                v_end = np.zeros(3)
        if target is None:
            target = heuristic_angular_search(local_map, esdf, vehicle, lg, p, self.inflation_radius)
            if target is None:
                if not self.status.backup_active:
                    self.status.backup_active = True
                    self.status.last_event = "backup"
                    self.status.primitive = backup_plan(vehicle, velocity, start_time=t)
                    self.status.local_goal = None  # force the global loop to re-derive it
                return self.status.primitive
            heading = lg.point - target
            n = np.linalg.norm(heading[:2])
            v_end = (heading / np.linalg.norm(heading)) * p.cruise_speed if n > 1e-9 else np.zeros(3)

        active = self.status.primitive
        if active is not None and not self.status.backup_active:
            elapsed = t - active.start_time
            target_moved = float(np.linalg.norm(active.position(active.duration) - target)) > 0.25
            if elapsed < 0.6 * active.duration and not target_moved:
                return active  # keep sampling the active primitive
        self.status.backup_active = False
        dist = float(np.linalg.norm(target - vehicle))
        T = min(max(dist / p.cruise_speed, p.t_min), p.t_max) if dist > 1e-9 else p.t_min
        prim = min_acc_primitive(vehicle, velocity, target, v_end, T, start_time=t)
        # stretch the duration until the sampled speed respects the limit
        for _ in range(12):
            peak = prim.max_speed()
            if peak <= self.speed_limit * 0.999 or T >= p.t_max:
                break
            T = min(T * max(peak / (self.speed_limit * 0.95), 1.1), p.t_max)
            prim = min_acc_primitive(vehicle, velocity, target, v_end, T, start_time=t)
        self.status.primitive = prim
        self.status.last_event = "primitive"
        return prim

    def command(self, t: float, position) -> tuple[np.ndarray, float] | None:
        """Sample the active primitive into a velocity command with a small
        position-correction term; None when idle."""
        prim = self.status.primitive
        if prim is None:
            return None
        tau = t - prim.start_time
        v = prim.velocity(tau)
        p_ref = prim.position(tau)
        v_cmd = v + 0.8 * (p_ref - np.asarray(position, dtype=float))
        # 3% headroom so controller tracking transients stay under the limit
        cap = 0.97 * self.speed_limit
        n = float(np.linalg.norm(v_cmd))
        if n > cap:
            v_cmd = v_cmd * (cap / n)
        heading = prim.velocity(min(tau + 0.3, prim.duration))
        yaw = math.atan2(heading[1], heading[0]) if np.linalg.norm(heading[:2]) > 0.05 else None
        return v_cmd, yaw
