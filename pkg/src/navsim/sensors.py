"""Simulated sensor suite: pinhole depth camera and noisy IMU.

Depth frames are rendered by raycasting the world through an undistorted
pinhole model; every camera product of a frame (depth image, point cloud,
stub image headers) shares one timestamp. The IMU model adds Gaussian white
noise and random-walk biases to the true body rate and specific force.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ImuNoiseConfig
from .geometry import Pose, quat_rotate
from .world import WorldModel, raycast_batch


@dataclass(frozen=True)
class CameraIntrinsics:
    width: int
    height: int
    hfov: float  # rad
    fx: float
    fy: float
    cx: float
    cy: float


def intrinsics_from_fov(width: int, height: int, hfov: float) -> CameraIntrinsics:
    """Intrinsics of an undistorted pinhole camera from resolution + HFOV:
    fx = fy = width / (2 tan(hfov/2)), principal point at the image center."""
    if width < 1 or height < 1:
        raise ValueError("width and height must be >= 1")
    if not (0.0 < hfov < np.pi):
        raise ValueError("hfov must be in (0, pi)")
    f = width / (2.0 * np.tan(hfov / 2.0))
    return CameraIntrinsics(int(width), int(height), float(hfov), f, f, width / 2.0, height / 2.0)


@dataclass(frozen=True)
class DepthImage:
    """Per-pixel z-depth (distance along the optical axis), meters.
    Pixels with no return within max_range hold +inf."""

    depth: np.ndarray  # (height, width) float64
    timestamp: float
    max_range: float

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def height(self) -> int:
        return self.depth.shape[0]


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray  # (N, 3) in the left-camera frame
    timestamp: float


# camera frame: +z optical axis, +x right, +y down


def _pixel_rays(intr: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Unit ray directions through pixel centers (camera frame) and each
    ray's norm scale (|d| where d=( (u+.5-cx)/fx, (v+.5-cy)/fy, 1 ))."""
    u = (np.arange(intr.width) + 0.5 - intr.cx) / intr.fx
    v = (np.arange(intr.height) + 0.5 - intr.cy) / intr.fy
    gu, gv = np.meshgrid(u, v)  # (H, W)
    d = np.stack([gu, gv, np.ones_like(gu)], axis=-1).reshape(-1, 3)
    norms = np.linalg.norm(d, axis=1)
    return d / norms[:, None], norms


_RAY_CACHE: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}


def render_depth(
    world: WorldModel,
    camera_pose: Pose,
    intr: CameraIntrinsics,
    max_range: float,
    timestamp: float = 0.0,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
) -> DepthImage:
    """Raycast one depth frame. Depth records distance along the optical
    axis (z-depth), not ray length."""
    key = (intr.width, intr.height, round(intr.hfov, 12))
    if key not in _RAY_CACHE:
        _RAY_CACHE[key] = _pixel_rays(intr)
    dirs_cam, norms = _RAY_CACHE[key]
    R = camera_pose.rotation()
    dirs_world = dirs_cam @ R.T
    # depth <= max_range corresponds to ray length <= max_range * |d|
    t = raycast_batch(world, camera_pose.position, dirs_world, max_range * norms)
    depth = (t / norms).reshape(intr.height, intr.width)
    if noise_sigma > 0.0:
        if rng is None:
            raise ValueError("depth noise requires an rng")
        noisy = depth + rng.normal(0.0, noise_sigma, size=depth.shape)
        depth = np.where(np.isfinite(depth), np.clip(noisy, 1e-6, max_range), depth)
    return DepthImage(depth, timestamp, max_range)


def depth_to_pointcloud(img: DepthImage, intr: CameraIntrinsics, stride: int = 1) -> PointCloud:
    """Back-project every stride-th finite pixel: X=(u-cx) z/fx, Y=(v-cy) z/fy, Z=z."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    depth = img.depth[::stride, ::stride]
    vs, us = np.nonzero(np.isfinite(depth))
    z = depth[vs, us]
    u = us * stride
    v = vs * stride
    x = (u - intr.cx) * z / intr.fx
    y = (v - intr.cy) * z / intr.fy
    return PointCloud(np.column_stack([x, y, z]), img.timestamp)


@dataclass(frozen=True)
class ImuSample:
    omega_m: np.ndarray  # rad/s, body frame
    a_m: np.ndarray  # m/s^2, specific force in body frame
    timestamp: float


@dataclass
class ImuBiasState:
    b_omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    b_a: np.ndarray = field(default_factory=lambda: np.zeros(3))


def specific_force_body(state, accel_inertial, gravity: float) -> np.ndarray:
    """Rotate (a_inertial - g_vec) into the body frame; g_vec = (0,0,-g)."""
    f_inertial = np.asarray(accel_inertial, dtype=float) - np.array([0.0, 0.0, -gravity])
    # body = R^T * inertial
    w, x, y, z = state.q
    q_conj = np.array([w, -x, -y, -z])
    return quat_rotate(q_conj, f_inertial)


def sample_imu(
    state,
    accel_inertial,
    params: ImuNoiseConfig,
    bias: ImuBiasState,
    rng: np.random.Generator,
    dt: float,
    gravity: float = 9.81,
    timestamp: float = 0.0,
) -> ImuSample:
    """One IMU measurement.

    Gyro: true body rate + bias + white noise. Accelerometer: specific
    force R^T (a_inertial - g_vec) + bias + white noise, the quantity a
    real accelerometer senses. Biases advance by a random walk with
    increment std sigma_b * sqrt(dt). Draw order is fixed for determinism:
    gyro noise, accel noise, gyro bias step, accel bias step.
    """
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    n_omega = rng.normal(0.0, params.sigma_omega, 3) if params.sigma_omega > 0 else np.zeros(3)
    n_a = rng.normal(0.0, params.sigma_a, 3) if params.sigma_a > 0 else np.zeros(3)
    omega_m = state.omega + bias.b_omega + n_omega
    a_m = specific_force_body(state, accel_inertial, gravity) + bias.b_a + n_a

    if params.sigma_omega_b > 0:
        bias.b_omega = bias.b_omega + rng.normal(0.0, params.sigma_omega_b, 3) * np.sqrt(dt)
    if params.sigma_a_b > 0:
        bias.b_a = bias.b_a + rng.normal(0.0, params.sigma_a_b, 3) * np.sqrt(dt)
    return ImuSample(omega_m, a_m, timestamp)


class ImuModel:
    """Owns bias state and a dedicated RNG stream; emits samples at imu_hz."""

    def __init__(self, params: ImuNoiseConfig, rng: np.random.Generator):
        self.params = params
        self.rng = rng
        self.bias = ImuBiasState()

    def sample(self, state, accel_inertial, gravity: float, dt: float, timestamp: float) -> ImuSample:
        return sample_imu(state, accel_inertial, self.params, self.bias, self.rng, dt, gravity, timestamp)


def image_stub(name: str, intr: CameraIntrinsics, timestamp: float) -> dict:
    """Frame-metadata-only stand-in for the grey/color image topics."""
    return {"frame": name, "width": intr.width, "height": intr.height, "timestamp": timestamp}
