"""Simulation configuration.

One SimConfig drives the whole stack. Defaults reproduce the reference
setup: 400 Hz physics, 200 Hz IMU, 30 Hz depth camera at 640x360 / 1.5 rad
HFOV, 0.2 m voxels on a 110x110x15 grid, 1 m/s speed limit. Everything is
overridable from a YAML file via :func:`load_config`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .geometry import RigidTransform


class ConfigError(ValueError):
    pass


# Default installation geometry: left camera sits 0.12 m ahead of the IMU,
# optical axis forward (camera z -> body x, camera x -> -y, camera y -> -z);
# right camera 0.05 m along camera x from the left one.
CAM_TO_IMU_R = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
CAM_TO_IMU_T = np.array([0.12, 0.0, 0.0])
RIGHT_TO_LEFT_R = np.eye(3)
RIGHT_TO_LEFT_T = np.array([0.05, 0.0, 0.0])


@dataclass(frozen=True)
class CameraConfig:
    width: int = 640
    height: int = 360
    hfov: float = 1.5  # rad
    max_range: float = 10.0  # m
    depth_noise_sigma: float = 0.0  # m, additive; no published value, default off
    pointcloud_stride: int = 4  # pixel stride when building the planner cloud


@dataclass(frozen=True)
class ImuNoiseConfig:
    sigma_omega: float = 2.0e-3  # rad/s white noise, per axis per sample
    sigma_a: float = 2.0e-2  # m/s^2 white noise
    sigma_omega_b: float = 1.0e-5  # rad/s/sqrt(s) gyro bias random walk
    sigma_a_b: float = 1.0e-4  # m/s^2/sqrt(s) accel bias random walk

    def validate(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigError(f"imu noise {f.name} must be >= 0")


@dataclass(frozen=True)
class VioConfig:
    fix_position_sigma: float = 0.02  # m white noise on each fix
    fix_yaw_sigma: float = 0.005  # rad
    drift_rate_sigma: float = 0.028  # m/sqrt(m); Monte-Carlo calibrated so an
    # ~80 m survey averages 0.30 m ATE RMSE over the seeded ensemble
    fix_rate: float = 30.0  # Hz
    fuse_gain: float = 0.35
    fuse_vel_ratio: float = 0.3  # velocity innovation gain = ratio * fuse_gain;
    # a full-gain velocity correction would turn fix noise into m/s-scale kicks

    def validate(self):
        if not (0.0 <= self.fuse_gain <= 1.0):
            raise ConfigError("fuse_gain must be in [0,1]")
        for name in ("fix_position_sigma", "fix_yaw_sigma", "drift_rate_sigma", "fix_rate"):
            if getattr(self, name) < 0:
                raise ConfigError(f"vio {name} must be >= 0")


@dataclass(frozen=True)
class MappingConfig:
    l_occ: float = 0.85  # log-odds hit increment
    l_free: float = -0.4  # log-odds pass-through increment
    l_clamp: float = 3.5
    p_occ: float = 0.7
    p_free: float = 0.3
    projection_z_band: tuple = (0.4, 2.4)  # m band projected into the 2-D grid
    local_azimuth_bins: int = 36
    local_ring_bins: int = 20
    local_z_bins: int = 6
    local_radius: float = 5.0  # m
    local_z_halfspan: float = 1.5  # m above/below the vehicle
    ground_filter_z: float = 0.3  # m, world-z cutoff: ground returns are not obstacles
    unknown_as_occupied: bool = True  # mapping-side default; planner overrides

    def validate(self):
        if not (0.0 < self.p_free < self.p_occ < 1.0):
            raise ConfigError("need 0 < p_free < p_occ < 1")
        if self.l_clamp <= 0:
            raise ConfigError("l_clamp must be > 0")
        if min(self.local_azimuth_bins, self.local_ring_bins, self.local_z_bins) < 1:
            raise ConfigError("local map bin counts must be >= 1")


@dataclass(frozen=True)
class PlannerConfig:
    global_hz: float = 15.0
    local_hz: float = 60.0
    has_delta: float = np.deg2rad(10.0)  # angular search step
    has_delta_max: float = np.deg2rad(80.0)
    has_step: float = 1.0  # m, candidate waypoint distance
    has_vertical_tilt: float = np.deg2rad(15.0)  # one +/- vertical tier
    flight_z_min: float = 0.7  # m, waypoint altitude band
    flight_z_max: float = 1.8
    safe_radius: float = 0.4  # m, min ESDF clearance at a candidate
    lookahead: float = 2.5  # m, local-goal distance along the path tangent
    cruise_speed: float = 0.6  # m/s nominal; must stay below speed_limit
    cruise_alt: float = 1.2  # m planning altitude
    goal_reach_dist: float = 0.4  # m horizontal acceptance radius, measured on
    # the estimate; margin keeps ground-truth arrival within 0.5 m
    t_min: float = 0.2  # s, minimum primitive duration
    t_max: float = 5.0
    goal_relocate_radius: float = 1.0  # m, nearest-free search around a blocked goal
    mission_timeout: float = 300.0  # s


@dataclass(frozen=True)
class ControlConfig:
    kp_pos: float = 1.1  # position P -> velocity setpoint
    kp_vel: float = 2.0  # velocity loop -> acceleration
    ki_vel: float = 0.0  # kept for completeness; exact mg feedforward needs no integrator
    kp_att: float = 200.0  # attitude error -> angular acceleration
    kd_att: float = 30.0  # body-rate damping
    max_accel: float = 5.0  # m/s^2 commanded acceleration cap
    tilt_limit: float = np.deg2rad(35.0)
    cmd_timeout: float = 0.5  # s without a setpoint before hold-position failsafe


@dataclass(frozen=True)
class SimConfig:
    physics_dt: float = 1.0 / 400.0
    gravity: float = 9.81
    vehicle_mass: float = 1.5  # kg
    inertia_diag: tuple = (0.029, 0.029, 0.055)  # kg m^2
    camera_hz: float = 30.0
    imu_hz: float = 200.0
    ground_truth_hz: float = 50.0
    speed_limit: float = 1.0  # m/s
    voxel_size: float = 0.2  # m
    map_dims: tuple = (110, 110, 15)  # voxels
    map_origin: tuple = (-11.0, -11.0, 0.0)  # m, voxel (0,0,0) corner
    inflation_radius: float = 0.4  # m
    rng_seed: int = 0
    camera: CameraConfig = field(default_factory=CameraConfig)
    imu_noise: ImuNoiseConfig = field(default_factory=ImuNoiseConfig)
    vio: VioConfig = field(default_factory=VioConfig)
    mapping: MappingConfig = field(default_factory=MappingConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    # extrinsics as (R, t) tuples so the dataclass stays hashable/serializable
    cam_to_imu: tuple = (CAM_TO_IMU_R.tolist(), CAM_TO_IMU_T.tolist())
    right_to_left_cam: tuple = (RIGHT_TO_LEFT_R.tolist(), RIGHT_TO_LEFT_T.tolist())
    imu_to_body: tuple = (np.eye(3).tolist(), [0.0, 0.0, 0.0])

    def __post_init__(self):
        if self.physics_dt <= 0:
            raise ConfigError("physics_dt must be > 0")
        if self.speed_limit <= 0:
            raise ConfigError("speed_limit must be > 0")
        if min(self.map_dims) < 1:
            raise ConfigError("map_dims must all be >= 1")
        if self.voxel_size <= 0:
            raise ConfigError("voxel_size must be > 0")
        tick_rate = 1.0 / self.physics_dt
        for name, hz in (("camera_hz", self.camera_hz), ("imu_hz", self.imu_hz)):
            if hz <= 0:
                raise ConfigError(f"{name} must be > 0")
            if hz > tick_rate + 1e-9:
                raise ConfigError(f"{name}={hz} exceeds the scheduler tick rate {tick_rate}")
        self.imu_noise.validate()
        self.vio.validate()
        self.mapping.validate()
        if self.planner.cruise_speed > self.speed_limit:
            raise ConfigError("planner cruise_speed must not exceed speed_limit")

    def cam_to_imu_transform(self) -> RigidTransform:
        R, t = self.cam_to_imu
        return RigidTransform(np.asarray(R), np.asarray(t))

    def imu_to_body_transform(self) -> RigidTransform:
        R, t = self.imu_to_body
        return RigidTransform(np.asarray(R), np.asarray(t))

    def cam_to_body_transform(self) -> RigidTransform:
        b_T_i = self.imu_to_body_transform()
        i_T_c = self.cam_to_imu_transform()
        return RigidTransform(b_T_i.R @ i_T_c.R, b_T_i.R @ i_T_c.t + b_T_i.t)


def _merge_dataclass(obj, data: dict, path: str = ""):
    """Rebuild a frozen dataclass with overrides from a nested dict."""
    kwargs = {}
    names = {f.name: f for f in fields(obj)}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"unknown config key '{path}{key}'")
        current = getattr(obj, key)
        if hasattr(current, "__dataclass_fields__"):
            if not isinstance(value, dict):
                raise ConfigError(f"config key '{path}{key}' expects a mapping")
            kwargs[key] = _merge_dataclass(current, value, path=f"{path}{key}.")
        elif isinstance(current, tuple) and isinstance(value, list):
            kwargs[key] = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        else:
            kwargs[key] = value
    return replace(obj, **kwargs)


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> SimConfig:
    """Build a SimConfig from an optional YAML file plus an overrides dict."""
    cfg = SimConfig()
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"config parse error in {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"config root in {path} must be a mapping")
        cfg = _merge_dataclass(cfg, data)
    if overrides:
        cfg = _merge_dataclass(cfg, overrides)
    return cfg
