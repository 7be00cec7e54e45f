"""Static world model: bounds, axis-aligned box obstacles, ground plane.

The world is the raycast target for depth sensing and the ground-truth
geometry for clearance evaluation. Descriptors are small YAML documents
with explicit meter units (see ``worlds/paper_world``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .accel import HAS_NUMBA, njit
from .geometry import Pose, RigidTransform

_TINY = 1e-300


class WorldFormatError(ValueError):
    """Descriptor does not parse or is missing/mistyping fields."""


class GeometryError(ValueError):
    """A parsed obstacle is geometrically invalid."""


@dataclass(frozen=True)
class WorldModel:
    """Immutable world: rectangular bounds, box obstacles, ground at z=0."""

    bounds: tuple  # (x_min, x_max, y_min, y_max) meters
    boxes: np.ndarray = field(default_factory=lambda: np.zeros((0, 6)))  # rows: min xyz, max xyz

    def __post_init__(self):
        boxes = np.ascontiguousarray(np.asarray(self.boxes, dtype=np.float64).reshape(-1, 6))
        boxes.setflags(write=False)
        object.__setattr__(self, "boxes", boxes)

    @property
    def n_obstacles(self) -> int:
        return int(self.boxes.shape[0])

    def contains_xy(self, x: float, y: float) -> bool:
        x_min, x_max, y_min, y_max = self.bounds
        return x_min <= x <= x_max and y_min <= y <= y_max

    def point_inside_obstacle(self, p) -> bool:
        if self.n_obstacles == 0:
            return bool(p[2] < 0.0)
        b = self.boxes
        hit = np.all((p >= b[:, :3]) & (p <= b[:, 3:]), axis=1)
        return bool(hit.any() or p[2] < 0.0)

    def distance_to_obstacles(self, p) -> float:
        """Euclidean distance from a point to the nearest obstacle surface
        (0 inside). The ground plane is not counted."""
        if self.n_obstacles == 0:
            return np.inf
        b = self.boxes
        d = np.maximum(b[:, :3] - p, 0.0) + np.maximum(p - b[:, 3:], 0.0)
        return float(np.sqrt((d * d).sum(axis=1)).min())

    def footprint_mask(self, origin_xy, cell: float, shape) -> np.ndarray:
        """Boolean grid of cells whose center lies inside any obstacle's
        x-y footprint; used as the oracle for map-reconstruction checks."""
        nx, ny = shape
        xs = origin_xy[0] + (np.arange(nx) + 0.5) * cell
        ys = origin_xy[1] + (np.arange(ny) + 0.5) * cell
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        mask = np.zeros((nx, ny), dtype=bool)
        for bx in self.boxes:
            mask |= (gx >= bx[0]) & (gx <= bx[3]) & (gy >= bx[1]) & (gy <= bx[4])
        return mask


def _require(cond: bool, msg: str):
    if not cond:
        raise WorldFormatError(msg)


def load_world(text: str) -> WorldModel:
    """Parse a world descriptor document into an immutable WorldModel."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise WorldFormatError(f"world descriptor parse error{where}: {e}") from e
    _require(isinstance(data, dict), "world descriptor root must be a mapping")
    _require("bounds" in data, "world descriptor missing 'bounds'")
    b = data["bounds"]
    _require(isinstance(b, dict), "'bounds' must be a mapping")
    for key in ("x_min", "x_max", "y_min", "y_max"):
        _require(key in b, f"'bounds' missing field '{key}'")
        _require(isinstance(b[key], (int, float)), f"'bounds.{key}' must be a number")
    bounds = (float(b["x_min"]), float(b["x_max"]), float(b["y_min"]), float(b["y_max"]))
    _require(bounds[0] < bounds[1] and bounds[2] < bounds[3], "'bounds' must have min < max")

    raw_obstacles = data.get("obstacles") or []
    _require(isinstance(raw_obstacles, list), "'obstacles' must be a list")
    boxes = np.zeros((len(raw_obstacles), 6))
    for i, ob in enumerate(raw_obstacles):
        _require(isinstance(ob, dict) and "min" in ob and "max" in ob,
                 f"obstacle #{i} must be a mapping with 'min' and 'max'")
        lo, hi = ob["min"], ob["max"]
        for name, v in (("min", lo), ("max", hi)):
            _require(isinstance(v, list) and len(v) == 3 and all(isinstance(c, (int, float)) for c in v),
                     f"obstacle #{i} '{name}' must be a list of 3 numbers")
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if not np.all(lo < hi):
            raise GeometryError(f"obstacle #{i} has min >= max on some axis: min={lo.tolist()} max={hi.tolist()}")
        if hi[0] < bounds[0] or lo[0] > bounds[1] or hi[1] < bounds[2] or lo[1] > bounds[3]:
            raise GeometryError(f"obstacle #{i} lies entirely outside the world bounds")
        boxes[i, :3] = lo
        boxes[i, 3:] = hi
    return WorldModel(bounds=bounds, boxes=boxes)


def load_world_file(path) -> WorldModel:
    from pathlib import Path

    return load_world(Path(path).read_text(encoding="utf-8"))


# --- raycasting ------------------------------------------------------------
#
# Slab-method ray/box intersection. A ray starting inside an obstacle (or
# below ground) reports distance 0. The batch kernel exists twice: a numba
# scalar loop and a broadcast numpy fallback; both evaluate the identical
# arithmetic so results agree bitwise.


def _raycast_batch_py(origin, dirs, boxes, max_ranges, out):
    n = dirs.shape[0]
    m = boxes.shape[0]
    ox, oy, oz = origin[0], origin[1], origin[2]
    for i in range(n):
        dx, dy, dz = dirs[i, 0], dirs[i, 1], dirs[i, 2]
        best = np.inf
        if oz <= 0.0:
            best = 0.0
        elif dz < 0.0:
            best = -oz / dz
        for j in range(m):
            tmin = 0.0
            tmax = np.inf
            ok = True
            for a in range(3):
                o = origin[a]
                d = dirs[i, a]
                lo = boxes[j, a]
                hi = boxes[j, a + 3]
                if d == 0.0:
                    if o < lo or o > hi:
                        ok = False
                        break
                else:
                    t1 = (lo - o) / d
                    t2 = (hi - o) / d
                    if t1 > t2:
                        t1, t2 = t2, t1
                    if t1 > tmin:
                        tmin = t1
                    if t2 < tmax:
                        tmax = t2
                    if tmin > tmax:
                        ok = False
                        break
            if ok and tmin < best:
                best = tmin
        out[i] = best if best <= max_ranges[i] else np.inf
    return out


_raycast_batch_jit = njit(cache=True)(_raycast_batch_py) if HAS_NUMBA else None


def _raycast_batch_np(origin, dirs, boxes, max_ranges):
    n = dirs.shape[0]
    best = np.full(n, np.inf)
    oz = origin[2]
    if oz <= 0.0:
        best[:] = 0.0
    else:
        desc = dirs[:, 2] < 0.0
        best[desc] = -oz / dirs[desc, 2]
    if boxes.shape[0]:
        o = origin[None, None, :]
        d = dirs[:, None, :]
        bmin = boxes[None, :, :3]
        bmax = boxes[None, :, 3:]
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (bmin - o) / d
            t2 = (bmax - o) / d
        lo = np.minimum(t1, t2)
        hi = np.maximum(t1, t2)
        zero = d == 0.0
        inside = (o >= bmin) & (o <= bmax)
        lo = np.where(zero, np.where(inside, -np.inf, np.inf), lo)
        hi = np.where(zero, np.where(inside, np.inf, -np.inf), hi)
        tmin = np.maximum(lo.max(axis=2), 0.0)
        tmax = hi.min(axis=2)
        t = np.where(tmin <= tmax, tmin, np.inf)
        best = np.minimum(best, t.min(axis=1))
    return np.where(best <= max_ranges, best, np.inf)


def raycast_batch(world: WorldModel, origin, dirs, max_ranges) -> np.ndarray:
    """Distances along unit rays from a common origin; inf where no surface
    lies within the per-ray max range."""
    origin = np.ascontiguousarray(origin, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    max_ranges = np.ascontiguousarray(max_ranges, dtype=np.float64)
    if _raycast_batch_jit is not None:
        out = np.empty(dirs.shape[0])
        return _raycast_batch_jit(origin, dirs, world.boxes, max_ranges, out)
    return _raycast_batch_np(origin, dirs, world.boxes, max_ranges)


def ray_hit(world: WorldModel, origin, direction, max_range: float):
    """Smallest positive distance to any box face or the ground plane, or
    None beyond max_range. Direction must be unit within 1e-9."""
    direction = np.asarray(direction, dtype=np.float64)
    n = np.linalg.norm(direction)
    if abs(n - 1.0) > 1e-9:
        raise ValueError(f"ray direction norm {n} not unit within 1e-9")
    t = raycast_batch(world, np.asarray(origin, dtype=np.float64),
                      direction[None, :], np.array([max_range]))[0]
    return None if np.isinf(t) else float(t)


def ground_truth_pose(state, imu_to_body: RigidTransform | None = None) -> Pose:
    """Pose of the IMU link in the inertial frame (body pose composed with
    the IMU mounting extrinsic)."""
    body = Pose(np.asarray(state.xi, dtype=float), np.asarray(state.q, dtype=float))
    if imu_to_body is None:
        return body
    return body.compose(imu_to_body.as_pose())
