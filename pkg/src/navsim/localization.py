"""Visual-inertial odometry emulation and trajectory evaluation.

The estimator's output contract is reproduced statistically instead of
reimplementing a feature tracker: IMU-rate strapdown propagation corrected
at vision rate by fixes that equal ground truth plus a distance-scaled
random-walk drift and white noise. A complementary fixed-gain update fuses
the two streams. ATE evaluation (nearest-timestamp association, optional
rigid alignment) closes the loop for accuracy reporting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ImuNoiseConfig, VioConfig
from .geometry import (
    Pose,
    quat_exp,
    quat_from_yaw,
    quat_multiply,
    quat_normalize,
    quat_rotate,
    quat_slerp,
    yaw_of,
)
from .sensors import ImuSample

IMU_PROPAGATED = "imu_propagated"
VISION_CORRECTED = "vision_corrected"


@dataclass(frozen=True)
class OdometryEstimate:
    pose: Pose
    velocity: np.ndarray
    timestamp: float
    source: str = IMU_PROPAGATED

    def __post_init__(self):
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float))


def propagate_imu(prev: OdometryEstimate, sample: ImuSample, gravity: float) -> OdometryEstimate:
    """Strapdown step: rotate the specific force into the inertial frame,
    add gravity, integrate velocity then position; attitude advances by the
    measured body rate."""
    dt = sample.timestamp - prev.timestamp
    if dt <= 0.0:
        raise ValueError("sample timestamp must be after the previous estimate")
    q = prev.pose.q
    a = quat_rotate(q, sample.a_m) + np.array([0.0, 0.0, -gravity])
    p = prev.pose.position + prev.velocity * dt + 0.5 * a * dt * dt
    v = prev.velocity + a * dt
    q_new = quat_normalize(quat_multiply(q, quat_exp(sample.omega_m * dt)))
    return OdometryEstimate(Pose(p, q_new), v, sample.timestamp, IMU_PROPAGATED)


@dataclass
class VioDriftState:
    """Slowly drifting offset, random-walked per meter of travel."""

    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    last_gt_position: np.ndarray | None = None


def vision_fix(gt_pose: Pose, model: VioConfig, drift: VioDriftState, rng: np.random.Generator) -> Pose:
    """One vision-rate fix: ground truth composed with the drift offset plus
    white position/yaw noise. The drift random walk advances by the distance
    traveled since the previous fix."""
    p = gt_pose.position
    if drift.last_gt_position is not None:
        dd = float(np.linalg.norm(p - drift.last_gt_position))
        if dd > 0.0:
            drift.offset = drift.offset + rng.normal(0.0, model.drift_rate_sigma, 3) * math.sqrt(dd)
        else:
            rng.normal(0.0, 0.0, 3)  # keep the stream length state-independent
    drift.last_gt_position = p.copy()
    fix_p = p + drift.offset + rng.normal(0.0, model.fix_position_sigma, 3)
    dyaw = float(rng.normal(0.0, model.fix_yaw_sigma))
    fix_q = quat_normalize(quat_multiply(quat_from_yaw(dyaw), gt_pose.q))
    return Pose(fix_p, fix_q)


def fuse(propagated: OdometryEstimate, fix: Pose, gain: float, innovation_dt: float = 1.0 / 30.0,
         vel_ratio: float = 0.3) -> OdometryEstimate:
    """Complementary update: position lerped and attitude slerped toward the
    fix by ``gain``; velocity corrected by the position innovation treated
    as a finite difference over ``innovation_dt``, at a reduced gain
    (gain * vel_ratio) so per-fix white noise does not become m/s kicks."""
    if not (0.0 <= gain <= 1.0):
        raise ValueError("gain must be in [0, 1]")
    p = propagated.pose.position
    innovation = fix.position - p
    p_new = p + gain * innovation
    q_new = quat_slerp(propagated.pose.q, fix.q, gain)
    v_new = propagated.velocity + (gain * vel_ratio) * innovation / innovation_dt
    return OdometryEstimate(Pose(p_new, q_new), v_new, propagated.timestamp, VISION_CORRECTED)


class VioEmulator:
    """Stateful front: feeds IMU samples and vision fixes through the
    propagate/fix/fuse operations; keeps the latest estimate."""

    def __init__(self, vio: VioConfig, gravity: float, initial_pose: Pose, initial_velocity, t0: float,
                 rng: np.random.Generator):
        self.vio = vio
        self.gravity = gravity
        self.rng = rng
        self.drift = VioDriftState()
        self.estimate = OdometryEstimate(initial_pose, np.asarray(initial_velocity, dtype=float), t0)

    def on_imu(self, sample: ImuSample) -> OdometryEstimate:
        self.estimate = propagate_imu(self.estimate, sample, self.gravity)
        return self.estimate

    def on_vision(self, gt_pose: Pose) -> OdometryEstimate:
        fix = vision_fix(gt_pose, self.vio, self.drift, self.rng)
        self.estimate = fuse(self.estimate, fix, self.vio.fuse_gain, 1.0 / self.vio.fix_rate,
                             self.vio.fuse_vel_ratio)
        return self.estimate


# --- trajectories and ATE -----------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray  # (N,)
    positions: np.ndarray  # (N, 3)
    quats: np.ndarray | None = None  # (N, 4), optional

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size == 0:
            raise ValueError("trajectory needs at least one timestamped pose")
        if np.any(np.diff(t) < 0):
            raise ValueError("trajectory timestamps must be monotone")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=float).reshape(-1, 3))

    def __len__(self) -> int:
        return self.times.size


@dataclass(frozen=True)
class TrajectoryPair:
    estimated: Trajectory
    ground_truth: Trajectory


class AssociationError(ValueError):
    pass


def _associate(est: Trajectory, gt: Trajectory, tol: float):
    idx = np.searchsorted(gt.times, est.times)
    idx = np.clip(idx, 1, len(gt) - 1) if len(gt) > 1 else np.zeros_like(idx)
    left = np.abs(gt.times[idx - 1] - est.times) if len(gt) > 1 else np.abs(gt.times[idx] - est.times)
    right = np.abs(gt.times[idx] - est.times)
    nearest = np.where(left <= right, idx - 1, idx) if len(gt) > 1 else idx
    ok = np.abs(gt.times[nearest] - est.times) <= tol
    if not ok.any():
        raise AssociationError(f"no trajectory pairs associate within {tol} s")
    return est.positions[ok], gt.positions[nearest[ok]]


def _align_yaw_xy(est: np.ndarray, gt: np.ndarray) -> np.ndarray:
    ce = est.mean(axis=0)
    cg = gt.mean(axis=0)
    e = est - ce
    g = gt - cg
    num = float(np.sum(e[:, 0] * g[:, 1] - e[:, 1] * g[:, 0]))
    den = float(np.sum(e[:, 0] * g[:, 0] + e[:, 1] * g[:, 1]))
    theta = math.atan2(num, den)
    c, s = math.cos(theta), math.sin(theta)
    R = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return (est - ce) @ R.T + cg


def _align_se3(est: np.ndarray, gt: np.ndarray) -> np.ndarray:
    ce = est.mean(axis=0)
    cg = gt.mean(axis=0)
    H = (est - ce).T @ (gt - cg)
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    S = np.diag([1.0, 1.0, d])
    R = Vt.T @ S @ U.T
    return (est - ce) @ R.T + cg


def compute_ate_rmse(pair: TrajectoryPair, align: str = "none", tolerance: float = 0.02) -> float:
    """Absolute trajectory error: RMS of translational residuals between
    nearest-timestamp pose pairs, after optional least-squares alignment
    ('none' | 'yaw_xy' | 'full_se3')."""
    if len(pair.estimated) < 2 or len(pair.ground_truth) < 2:
        raise ValueError("need at least 2 poses per trajectory")
    est, gt = _associate(pair.estimated, pair.ground_truth, tolerance)
    if align == "yaw_xy":
        est = _align_yaw_xy(est, gt)
    elif align == "full_se3":
        est = _align_se3(est, gt)
    elif align != "none":
        raise ValueError(f"unknown alignment {align!r}")
    err = est - gt
    return float(np.sqrt(np.mean(np.sum(err * err, axis=1))))


def save_tum(path, traj: Trajectory):
    """TUM text format: 'timestamp x y z qx qy qz qw' per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for k in range(len(traj)):
            q = traj.quats[k] if traj.quats is not None else np.array([1.0, 0.0, 0.0, 0.0])
            p = traj.positions[k]
            fh.write(f"{traj.times[k]:.6f} {p[0]:.9f} {p[1]:.9f} {p[2]:.9f} "
                     f"{q[1]:.9f} {q[2]:.9f} {q[3]:.9f} {q[0]:.9f}\n")


def load_tum(path) -> Trajectory:
    times, positions, quats = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            vals = [float(x) for x in line.split()]
            times.append(vals[0])
            positions.append(vals[1:4])
            qx, qy, qz, qw = vals[4:8]
            quats.append([qw, qx, qy, qz])
    return Trajectory(np.asarray(times), np.asarray(positions), np.asarray(quats))


# --- survey-path calibration ensemble ----------------------------------------
#
# The accuracy target is a distribution mean over seeded replays of an ~80 m
# survey. The survey is a constant-speed circle (analytic kinematics, so the
# IMU inputs are exact); the ensemble is evaluated with every seed advanced
# in lockstep through vectorized twins of the scalar operations above. A
# test pins the vectorized path to the scalar path bit-for-bit.


def survey_circle_state(t, speed: float = 1.0, length: float = 80.0, alt: float = 1.2):
    """Ground-truth kinematics of the survey circle at time(s) t: position,
    velocity, yaw, inertial acceleration, body rate."""
    t = np.asarray(t, dtype=float)
    r = length / (2.0 * np.pi)
    w = speed / r
    th = w * t
    pos = np.stack([r * np.cos(th), r * np.sin(th), np.full_like(th, alt)], axis=-1)
    vel = np.stack([-speed * np.sin(th), speed * np.cos(th), np.zeros_like(th)], axis=-1)
    acc = np.stack([-speed * w * np.cos(th), -speed * w * np.sin(th), np.zeros_like(th)], axis=-1)
    yaw = th + np.pi / 2.0
    return pos, vel, yaw, acc, w


def _batch_quat_multiply(a, b):
    aw, ax, ay, az = a[:, 0], a[:, 1], a[:, 2], a[:, 3]
    bw, bx, by, bz = b[:, 0], b[:, 1], b[:, 2], b[:, 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=1,
    )


def _batch_quat_rotate(q, v):
    w = q[:, 0:1]
    u = q[:, 1:]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def _batch_quat_exp(r):
    angle = np.linalg.norm(r, axis=1, keepdims=True)
    small = angle[:, 0] < 1e-12
    s = np.empty_like(angle)
    np.divide(np.sin(0.5 * angle), angle, out=s, where=~small[:, None])
    s[small] = 0.5
    q = np.concatenate([np.cos(0.5 * angle), r * s], axis=1)
    q[small, 0] = 1.0
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def _batch_quat_slerp(a, b, t: float):
    """Row-wise mirror of geometry.quat_slerp (same branches, same math)."""
    dot = np.sum(a * b, axis=1)
    b = np.where(dot[:, None] < 0.0, -b, b)
    dot = np.abs(dot)
    lerp = a + t * (b - a)
    with np.errstate(invalid="ignore", divide="ignore"):
        theta = np.arccos(np.minimum(dot, 1.0))
        s = np.sin(theta)
        sph = (np.sin((1.0 - t) * theta) / s)[:, None] * a + (np.sin(t * theta) / s)[:, None] * b
    out = np.where((dot > 1.0 - 1e-12)[:, None], lerp, sph)
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def survey_rng_streams(seed: int):
    """(imu_rng, vio_rng) for one survey replay; the scalar and vectorized
    paths both consume these streams in the same order."""
    imu_ss, vio_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(imu_ss), np.random.default_rng(vio_ss)


def ate_survey_ensemble(
    vio: VioConfig,
    imu_noise: ImuNoiseConfig,
    n_seeds: int = 100,
    base_seed: int = 1000,
    duration: float = 80.0,
    imu_hz: float = 200.0,
    gravity: float = 9.81,
) -> np.ndarray:
    """ATE RMSE (align='none') of each seeded replay of the survey circle.

    All seeds advance in lockstep through vectorized twins of the scalar
    propagate/fix/fuse operations; noise comes pre-drawn from the same
    per-seed streams the scalar path consumes, in the same order, so one
    replay here reproduces a scalar VioEmulator replay.
    """
    n_steps = int(round(duration * imu_hz))
    dt = 1.0 / imu_hz
    fix_every = int(round(imu_hz / vio.fix_rate))
    n_fixes = n_steps // fix_every
    S = n_seeds

    # pre-drawn standard normals, per seed: 12 per IMU step (gyro/accel white
    # noise + two bias walk steps), 4 for the first fix (no drift yet), 7 after
    imu_blk = np.empty((S, n_steps, 12))
    fix_blk = np.empty((S, n_fixes, 7))
    for k in range(S):
        imu_rng, vio_rng = survey_rng_streams(base_seed + k)
        imu_blk[k] = imu_rng.standard_normal((n_steps, 12))
        fix_blk[k, 0, :3] = 0.0
        fix_blk[k, 0, 3:] = vio_rng.standard_normal(4)
        if n_fixes > 1:
            fix_blk[k, 1:] = vio_rng.standard_normal((n_fixes - 1, 7))

    times = np.arange(n_steps + 1) * dt
    gt_pos, gt_vel, gt_yaw, gt_acc, w_z = survey_circle_state(times)

    pos = np.repeat(gt_pos[0][None, :], S, axis=0)
    vel = np.repeat(gt_vel[0][None, :], S, axis=0)
    q = np.column_stack([np.full(S, np.cos(0.5 * gt_yaw[0])), np.zeros(S), np.zeros(S),
                         np.full(S, np.sin(0.5 * gt_yaw[0]))])
    b_omega = np.zeros((S, 3))
    b_a = np.zeros((S, 3))
    drift = np.zeros((S, 3))
    last_fix_gt = None
    fix_i = 0
    sq_sum = np.zeros(S)

    g_vec = np.array([0.0, 0.0, -gravity])
    sqrt_dt = math.sqrt(dt)
    for k in range(1, n_steps + 1):
        # true IMU quantities at the interval start (exact analytic kinematics)
        yaw0 = gt_yaw[k - 1]
        f_inertial = gt_acc[k - 1] - g_vec
        c, s = np.cos(yaw0), np.sin(yaw0)
        f_body = np.array([c * f_inertial[0] + s * f_inertial[1],
                           -s * f_inertial[0] + c * f_inertial[1],
                           f_inertial[2]])
        blk = imu_blk[:, k - 1, :]
        omega_m = b_omega + imu_noise.sigma_omega * blk[:, 0:3]
        omega_m[:, 2] += w_z
        a_m = f_body[None, :] + b_a + imu_noise.sigma_a * blk[:, 3:6]
        b_omega = b_omega + (imu_noise.sigma_omega_b * sqrt_dt) * blk[:, 6:9]
        b_a = b_a + (imu_noise.sigma_a_b * sqrt_dt) * blk[:, 9:12]

        a_in = _batch_quat_rotate(q, a_m) + g_vec[None, :]
        pos = pos + vel * dt + 0.5 * a_in * dt * dt
        vel = vel + a_in * dt
        q = _batch_quat_multiply(q, _batch_quat_exp(omega_m * dt))
        q = q / np.linalg.norm(q, axis=1, keepdims=True)

        if k % fix_every == 0:
            gt_p = gt_pos[k]
            fb = fix_blk[:, fix_i, :]
            if last_fix_gt is not None:
                dd = float(np.linalg.norm(gt_p - last_fix_gt))
                drift = drift + (vio.drift_rate_sigma * math.sqrt(dd)) * fb[:, 0:3]
            last_fix_gt = gt_p.copy()
            fix_p = gt_p[None, :] + drift + vio.fix_position_sigma * fb[:, 3:6]
            dyaw = vio.fix_yaw_sigma * fb[:, 6]
            fix_q = _batch_quat_multiply(
                np.column_stack([np.cos(0.5 * dyaw), np.zeros(S), np.zeros(S), np.sin(0.5 * dyaw)]),
                np.column_stack([np.full(S, np.cos(0.5 * gt_yaw[k])), np.zeros(S), np.zeros(S),
                                 np.full(S, np.sin(0.5 * gt_yaw[k]))]),
            )
            innovation = fix_p - pos
            pos = pos + vio.fuse_gain * innovation
            vel = vel + (vio.fuse_gain * vio.fuse_vel_ratio) * innovation * vio.fix_rate
            q = _batch_quat_slerp(q, fix_q, vio.fuse_gain)
            fix_i += 1

        err = pos - gt_pos[k][None, :]
        sq_sum += np.sum(err * err, axis=1)
    return np.sqrt(sq_sum / n_steps)


def run_survey_scalar(seed: int, vio: VioConfig, imu_noise: ImuNoiseConfig, duration: float = 80.0,
                      imu_hz: float = 200.0, gravity: float = 9.81) -> float:
    """One survey replay through the scalar operations (propagate_imu,
    vision_fix, fuse); reference for the vectorized ensemble."""
    from .sensors import ImuBiasState, sample_imu

    n_steps = int(round(duration * imu_hz))
    dt = 1.0 / imu_hz
    fix_every = int(round(imu_hz / vio.fix_rate))
    imu_rng, vio_rng = survey_rng_streams(seed)
    times = np.arange(n_steps + 1) * dt
    gt_pos, gt_vel, gt_yaw, gt_acc, w_z = survey_circle_state(times)

    est = OdometryEstimate(Pose(gt_pos[0], quat_from_yaw(float(gt_yaw[0]))), gt_vel[0], 0.0)
    emu = VioEmulator(vio, gravity, est.pose, est.velocity, 0.0, vio_rng)
    bias = ImuBiasState()
    sq = 0.0

    @dataclass
    class _TrueState:
        omega: np.ndarray
        q: np.ndarray

    for k in range(1, n_steps + 1):
        st = _TrueState(np.array([0.0, 0.0, w_z]), quat_from_yaw(float(gt_yaw[k - 1])))
        sample = sample_imu(st, gt_acc[k - 1], imu_noise, bias, imu_rng, dt, gravity, timestamp=k * dt)
        emu.on_imu(sample)
        if k % fix_every == 0:
            emu.on_vision(Pose(gt_pos[k], quat_from_yaw(float(gt_yaw[k]))))
        e = emu.estimate.pose.position - gt_pos[k]
        sq += float(e @ e)
    return math.sqrt(sq / n_steps)
