"""Global/local mapping stack.

Four representations:
  * GlobalOccupancyMap - Cartesian log-odds voxel grid, incrementally
    updated by ray integration (exact integer voxel walking).
  * LocalCylindricalMap - vehicle-centered, yaw-aligned hit-count bins,
    rebuilt from scratch every sensor frame.
  * ProjectedGrid2D - tri-state (free/occupied/unknown) ground projection
    of the global map over a z band.
  * EsdfMap2D - signed Euclidean distance over the projected grid with
    bilinear distance/gradient queries.

The ray-integration and distance-transform inner loops ship as numba
kernels with python/numpy fallbacks (see navsim.accel).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .accel import HAS_NUMBA, njit
from .config import MappingConfig
from .geometry import Pose

UNKNOWN = -1
FREE = 0
OCCUPIED = 1

_BIG = 1e18  # stand-in for +inf inside the squared distance transform


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


# --- ray integration kernel -------------------------------------------------


def _integrate_rays_py(logodds, origin, pts, map_origin, inv_vox, l_occ, l_free, l_min, l_max):
    nx, ny, nz = logodds.shape
    ox = (origin[0] - map_origin[0]) * inv_vox
    oy = (origin[1] - map_origin[1]) * inv_vox
    oz = (origin[2] - map_origin[2]) * inv_vox
    sx = int(math.floor(ox))
    sy = int(math.floor(oy))
    sz = int(math.floor(oz))
    for n in range(pts.shape[0]):
        exf = (pts[n, 0] - map_origin[0]) * inv_vox
        eyf = (pts[n, 1] - map_origin[1]) * inv_vox
        ezf = (pts[n, 2] - map_origin[2]) * inv_vox
        ex = int(math.floor(exf))
        ey = int(math.floor(eyf))
        ez = int(math.floor(ezf))

        dx = exf - ox
        dy = eyf - oy
        dz = ezf - oz

        cx, cy, cz = sx, sy, sz
        step_x = 1 if dx > 0.0 else (-1 if dx < 0.0 else 0)
        step_y = 1 if dy > 0.0 else (-1 if dy < 0.0 else 0)
        step_z = 1 if dz > 0.0 else (-1 if dz < 0.0 else 0)

        if step_x != 0:
            nxt = cx + 1.0 if step_x > 0 else float(cx)
            t_max_x = (nxt - ox) / dx
            t_dx = abs(1.0 / dx)
        else:
            t_max_x = np.inf
            t_dx = np.inf
        if step_y != 0:
            nxt = cy + 1.0 if step_y > 0 else float(cy)
            t_max_y = (nxt - oy) / dy
            t_dy = abs(1.0 / dy)
        else:
            t_max_y = np.inf
            t_dy = np.inf
        if step_z != 0:
            nxt = cz + 1.0 if step_z > 0 else float(cz)
            t_max_z = (nxt - oz) / dz
            t_dz = abs(1.0 / dz)
        else:
            t_max_z = np.inf
            t_dz = np.inf

        # walk from the sensor voxel to the endpoint voxel, marking pass-through
        # voxels free; the sensor's own voxel and the endpoint stay untouched here
        guard = 3 * (nx + ny + nz) + int(abs(dx) + abs(dy) + abs(dz)) + 6
        for _ in range(guard):
            if cx == ex and cy == ey and cz == ez:
                break
            if t_max_x <= t_max_y and t_max_x <= t_max_z:
                if t_max_x > 1.0:
                    break
                cx += step_x
                t_max_x += t_dx
            elif t_max_y <= t_max_z:
                if t_max_y > 1.0:
                    break
                cy += step_y
                t_max_y += t_dy
            else:
                if t_max_z > 1.0:
                    break
                cz += step_z
                t_max_z += t_dz
            if cx == ex and cy == ey and cz == ez:
                break
            if 0 <= cx < nx and 0 <= cy < ny and 0 <= cz < nz:
                v = logodds[cx, cy, cz] + l_free
                if v < l_min:
                    v = l_min
                logodds[cx, cy, cz] = v

        if 0 <= ex < nx and 0 <= ey < ny and 0 <= ez < nz:
            v = logodds[ex, ey, ez] + l_occ
            if v > l_max:
                v = l_max
            logodds[ex, ey, ez] = v


_integrate_rays_jit = njit(cache=True)(_integrate_rays_py) if HAS_NUMBA else None


# --- squared Euclidean distance transform (two-pass parabolic) ---------------


def _edt_sq_2d_py(f):
    """In-place exact squared EDT of f (0 at sources, _BIG elsewhere),
    lower-envelope-of-parabolas method, separable over the two axes."""
    nx, ny = f.shape
    n = nx if nx > ny else ny
    d = np.empty(n)
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1)
    for j in range(ny):  # transform along axis 0
        k = 0
        v[0] = 0
        z[0] = -np.inf
        z[1] = np.inf
        for q in range(1, nx):
            s = ((f[q, j] + q * q) - (f[v[k], j] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
            while s <= z[k]:
                k -= 1
                s = ((f[q, j] + q * q) - (f[v[k], j] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
            k += 1
            v[k] = q
            z[k] = s
            z[k + 1] = np.inf
        k = 0
        for q in range(nx):
            while z[k + 1] < q:
                k += 1
            d[q] = (q - v[k]) * (q - v[k]) + f[v[k], j]
        for q in range(nx):
            f[q, j] = d[q]
    for i in range(nx):  # transform along axis 1
        k = 0
        v[0] = 0
        z[0] = -np.inf
        z[1] = np.inf
        for q in range(1, ny):
            s = ((f[i, q] + q * q) - (f[i, v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
            while s <= z[k]:
                k -= 1
                s = ((f[i, q] + q * q) - (f[i, v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
            k += 1
            v[k] = q
            z[k] = s
            z[k + 1] = np.inf
        k = 0
        for q in range(ny):
            while z[k + 1] < q:
                k += 1
            d[q] = (q - v[k]) * (q - v[k]) + f[i, v[k]]
        for q in range(ny):
            f[i, q] = d[q]
    return f


_edt_sq_2d_jit = njit(cache=True)(_edt_sq_2d_py) if HAS_NUMBA else None


def edt_squared_cells(sources: np.ndarray) -> np.ndarray:
    """Exact squared distance (in cell units) from every cell to the nearest
    True cell of ``sources``; _BIG-scale values where no source exists."""
    f = np.where(sources, 0.0, _BIG).astype(np.float64)
    if _edt_sq_2d_jit is not None:
        return _edt_sq_2d_jit(f)
    return _edt_sq_2d_py(f)


# --- global occupancy map -----------------------------------------------------


class GlobalOccupancyMap:
    """Probabilistic occupancy voxel grid in world coordinates.

    Log-odds updates: endpoint voxel +l_occ, every traversed voxel +l_free,
    clamped to +-l_clamp. Indexing is [ix, iy, iz] with voxel (0,0,0)'s low
    corner at ``origin``.
    """

    def __init__(self, origin, voxel_size: float, dims, params: MappingConfig | None = None):
        self.origin = np.asarray(origin, dtype=float)
        self.voxel_size = float(voxel_size)
        self.dims = tuple(int(d) for d in dims)
        self.params = params or MappingConfig()
        self.logodds = np.zeros(self.dims, dtype=np.float64)
        self.version = 0

    def voxel_index(self, p) -> tuple:
        rel = (np.asarray(p, dtype=float) - self.origin) / self.voxel_size
        return tuple(int(math.floor(c)) for c in rel)

    def voxel_center(self, idx) -> np.ndarray:
        return self.origin + (np.asarray(idx, dtype=float) + 0.5) * self.voxel_size

    def in_bounds(self, idx) -> bool:
        return all(0 <= idx[i] < self.dims[i] for i in range(3))

    def probability(self) -> np.ndarray:
        return 1.0 - 1.0 / (1.0 + np.exp(self.logodds))

    def occupied_voxel_centers(self) -> np.ndarray:
        thr = logit(self.params.p_occ)
        idx = np.argwhere(self.logodds > thr)
        if idx.size == 0:
            return np.zeros((0, 3))
        return self.origin + (idx + 0.5) * self.voxel_size

    def snapshot(self) -> np.ndarray:
        return self.logodds.copy()


def integrate_pointcloud(gmap: GlobalOccupancyMap, sensor_pose: Pose, cloud) -> GlobalOccupancyMap:
    """Integrate one sensor frame: cloud points are in the sensor frame and
    get transformed by sensor_pose before ray-walking. Out-of-bounds ray
    segments are silently skipped."""
    pts = np.asarray(cloud.points if hasattr(cloud, "points") else cloud, dtype=np.float64)
    if pts.size == 0:
        return gmap
    R = sensor_pose.rotation()
    world_pts = np.ascontiguousarray(pts @ R.T + sensor_pose.position)
    p = gmap.params
    args = (
        gmap.logodds,
        np.ascontiguousarray(sensor_pose.position, dtype=np.float64),
        world_pts,
        np.ascontiguousarray(gmap.origin, dtype=np.float64),
        1.0 / gmap.voxel_size,
        p.l_occ,
        p.l_free,
        -p.l_clamp,
        p.l_clamp,
    )
    if _integrate_rays_jit is not None:
        _integrate_rays_jit(*args)
    else:
        _integrate_rays_py(*args)
    gmap.version += 1
    return gmap


# --- local cylindrical map ----------------------------------------------------


@dataclass(frozen=True)
class LocalCylindricalMap:
    counts: np.ndarray  # (n_az, n_ring, n_z) uint32 hit counts
    vehicle_xy: np.ndarray
    vehicle_z: float
    yaw: float
    radius: float
    z_halfspan: float

    @property
    def n_cells(self) -> int:
        return int(self.counts.size)

    def occupied_cells_local(self) -> tuple[np.ndarray, np.ndarray]:
        """Centers of nonzero bins in the yaw-aligned vehicle frame, plus each
        bin's half-diagonal (collision padding grows with the ring radius)."""
        n_az, n_ring, n_z = self.counts.shape
        idx = np.argwhere(self.counts > 0)
        if idx.size == 0:
            return np.zeros((0, 3)), np.zeros(0)
        dr = self.radius / n_ring
        da = 2.0 * np.pi / n_az
        dz = 2.0 * self.z_halfspan / n_z
        az = -np.pi + (idx[:, 0] + 0.5) * da
        r = (idx[:, 1] + 0.5) * dr
        z = -self.z_halfspan + (idx[:, 2] + 0.5) * dz
        r_out = (idx[:, 1] + 1.0) * dr
        pads = 0.5 * np.sqrt(dr * dr + (r_out * da) ** 2 + dz * dz)
        return np.column_stack([r * np.cos(az), r * np.sin(az), z]), pads

    def occupied_cells_world(self) -> tuple[np.ndarray, np.ndarray]:
        local, pads = self.occupied_cells_local()
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        x = c * local[:, 0] - s * local[:, 1] + self.vehicle_xy[0]
        y = s * local[:, 0] + c * local[:, 1] + self.vehicle_xy[1]
        return np.column_stack([x, y, local[:, 2] + self.vehicle_z]), pads


def rebuild_local_map(cloud, sensor_pose: Pose, vehicle_pose: Pose, params: MappingConfig) -> LocalCylindricalMap:
    """Fresh cylindrical map from one frame: each in-range point binned by
    (azimuth, radius, z) in the yaw-aligned vehicle frame. No accumulation
    across frames; output depends only on the arguments."""
    pts = np.asarray(cloud.points if hasattr(cloud, "points") else cloud, dtype=np.float64)
    counts = np.zeros((params.local_azimuth_bins, params.local_ring_bins, params.local_z_bins), dtype=np.uint32)
    yaw = vehicle_pose.yaw()
    vxy = vehicle_pose.position[:2].copy()
    vz = float(vehicle_pose.position[2])
    if pts.size:
        R = sensor_pose.rotation()
        world = pts @ R.T + sensor_pose.position
        world = world[world[:, 2] >= params.ground_filter_z]  # ground returns are not obstacles
        rel = world - vehicle_pose.position
        c, s = np.cos(-yaw), np.sin(-yaw)
        x = c * rel[:, 0] - s * rel[:, 1]
        y = s * rel[:, 0] + c * rel[:, 1]
        z = rel[:, 2]
        r = np.hypot(x, y)
        keep = (r <= params.local_radius) & (np.abs(z) <= params.local_z_halfspan)
        if keep.any():
            x, y, z, r = x[keep], y[keep], z[keep], r[keep]
            az = np.arctan2(y, x)
            ia = np.clip(((az + np.pi) / (2.0 * np.pi) * params.local_azimuth_bins).astype(np.int64),
                         0, params.local_azimuth_bins - 1)
            ir = np.clip((r / params.local_radius * params.local_ring_bins).astype(np.int64),
                         0, params.local_ring_bins - 1)
            iz = np.clip(((z + params.local_z_halfspan) / (2.0 * params.local_z_halfspan)
                          * params.local_z_bins).astype(np.int64), 0, params.local_z_bins - 1)
            np.add.at(counts, (ia, ir, iz), 1)
    counts.setflags(write=False)
    return LocalCylindricalMap(counts, vxy, vz, yaw, params.local_radius, params.local_z_halfspan)


# --- 2-D projection -------------------------------------------------------------


@dataclass(frozen=True)
class ProjectedGrid2D:
    """Tri-state ground projection; cells[ix, iy] in {UNKNOWN, FREE, OCCUPIED}."""

    cells: np.ndarray  # int8
    origin_xy: np.ndarray
    cell_size: float

    def __post_init__(self):
        object.__setattr__(self, "origin_xy", np.asarray(self.origin_xy, dtype=float))

    @property
    def shape(self) -> tuple:
        return self.cells.shape

    def cell_center(self, i: int, j: int) -> np.ndarray:
        return self.origin_xy + (np.array([i, j]) + 0.5) * self.cell_size

    def cell_of(self, xy) -> tuple:
        rel = (np.asarray(xy, dtype=float) - self.origin_xy) / self.cell_size
        return int(math.floor(rel[0])), int(math.floor(rel[1]))


def project_to_2d(gmap: GlobalOccupancyMap, z_band, p_occ_threshold: float, p_free_threshold: float) -> ProjectedGrid2D:
    """Column rule over the z band: occupied if any voxel above p_occ, free
    if at least one voxel observed and all observed below p_free, else unknown."""
    if not (0.0 < p_free_threshold < p_occ_threshold < 1.0):
        raise ValueError("need 0 < p_free < p_occ < 1")
    z0, z1 = z_band
    vox = gmap.voxel_size
    k0 = max(0, int(math.floor((z0 - gmap.origin[2]) / vox)))
    k1 = min(gmap.dims[2], int(math.ceil((z1 - gmap.origin[2]) / vox)))
    cells = np.full(gmap.dims[:2], UNKNOWN, dtype=np.int8)
    if k1 > k0:
        band = gmap.logodds[:, :, k0:k1]
        observed = band != 0.0
        l_occ_thr = logit(p_occ_threshold)
        l_free_thr = logit(p_free_threshold)
        occ = (band > l_occ_thr).any(axis=2)
        any_obs = observed.any(axis=2)
        all_obs_free = np.where(observed, band < l_free_thr, True).all(axis=2)
        cells[any_obs & all_obs_free] = FREE
        cells[occ] = OCCUPIED
    return ProjectedGrid2D(cells, gmap.origin[:2].copy(), vox)


# --- ESDF -----------------------------------------------------------------------


@dataclass(frozen=True)
class EsdfMap2D:
    """Signed distance (m) on the projected grid: distance between cell
    centers, negative inside occupied cells."""

    dist: np.ndarray
    origin_xy: np.ndarray
    cell_size: float
    max_distance: float

    @property
    def shape(self) -> tuple:
        return self.dist.shape


def compute_esdf(grid: ProjectedGrid2D, unknown_is: str = "occupied", max_distance: float | None = None) -> EsdfMap2D:
    """Exact signed Euclidean distance transform of the projected grid.

    ``unknown_is`` decides whether unknown cells count as obstacles. The
    positive part is the distance to the nearest occupied cell center; on
    occupied cells the complementary transform supplies a negative distance
    to the nearest non-occupied cell.
    """
    if unknown_is not in ("occupied", "free"):
        raise ValueError("unknown_is must be 'occupied' or 'free'")
    occ = grid.cells == OCCUPIED
    if unknown_is == "occupied":
        occ = occ | (grid.cells == UNKNOWN)
    cap = max_distance if max_distance is not None else math.hypot(*grid.shape) * grid.cell_size
    sq_out = edt_squared_cells(occ)
    sq_in = edt_squared_cells(~occ)
    dist = np.where(occ, -np.sqrt(sq_in), np.sqrt(sq_out)) * grid.cell_size
    dist = np.clip(dist, -cap, cap)
    return EsdfMap2D(dist, grid.origin_xy.copy(), grid.cell_size, cap)


def query_distance_gradient(esdf: EsdfMap2D, xy) -> tuple[float, np.ndarray]:
    """Bilinear distance and its analytic in-cell gradient at a world point."""
    x, y = float(xy[0]), float(xy[1])
    nx, ny = esdf.shape
    x0, y0 = esdf.origin_xy
    if not (x0 <= x <= x0 + nx * esdf.cell_size and y0 <= y <= y0 + ny * esdf.cell_size):
        raise ValueError(f"query ({x}, {y}) outside the distance field")
    # continuous cell-center coordinates, clamped to the interpolable interior
    fx = min(max((x - x0) / esdf.cell_size - 0.5, 0.0), nx - 1.0)
    fy = min(max((y - y0) / esdf.cell_size - 0.5, 0.0), ny - 1.0)
    i0 = min(int(fx), nx - 2) if nx > 1 else 0
    j0 = min(int(fy), ny - 2) if ny > 1 else 0
    i1 = min(i0 + 1, nx - 1)
    j1 = min(j0 + 1, ny - 1)
    tx = fx - i0
    ty = fy - j0
    f00 = esdf.dist[i0, j0]
    f10 = esdf.dist[i1, j0]
    f01 = esdf.dist[i0, j1]
    f11 = esdf.dist[i1, j1]
    d = (1 - ty) * ((1 - tx) * f00 + tx * f10) + ty * ((1 - tx) * f01 + tx * f11)
    gx = ((1 - ty) * (f10 - f00) + ty * (f11 - f01)) / esdf.cell_size
    gy = ((1 - tx) * (f01 - f00) + tx * (f11 - f10)) / esdf.cell_size
    return float(d), np.array([gx, gy])


# --- exports --------------------------------------------------------------------


def export_grid_dump(gmap: GlobalOccupancyMap, path):
    """Portable dump: one JSON header line, then row-major occupancy
    probabilities (x-major, then y, then z), one z-slice per line."""
    prob = gmap.probability()
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "origin": gmap.origin.tolist(),
            "voxel_size": gmap.voxel_size,
            "dims": list(gmap.dims),
        }
        fh.write(json.dumps(header) + "\n")
        flat = prob.reshape(gmap.dims[0] * gmap.dims[1], gmap.dims[2])
        for row in flat:
            fh.write(" ".join(f"{v:.6f}" for v in row) + "\n")


def grid_to_grayscale(grid: ProjectedGrid2D) -> np.ndarray:
    """uint8 image of the projection: free 255, unknown 127, occupied 0."""
    img = np.full(grid.shape, 127, dtype=np.uint8)
    img[grid.cells == FREE] = 255
    img[grid.cells == OCCUPIED] = 0
    return img


def esdf_to_grayscale(esdf: EsdfMap2D) -> np.ndarray:
    """uint8 image of the distance field, 0 at/inside obstacles."""
    d = np.clip(esdf.dist, 0.0, None)
    top = d.max() if d.max() > 0 else 1.0
    return (d / top * 255.0).astype(np.uint8)


def save_grayscale_png(img: np.ndarray, path):
    from PIL import Image

    # transpose so +x is right and +y is up in the image
    Image.fromarray(np.flipud(img.T)).save(path)
