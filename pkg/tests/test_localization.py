import numpy as np
import pytest

from navsim.config import ImuNoiseConfig, VioConfig
from navsim.geometry import Pose, quat_from_yaw
from navsim.localization import (
    AssociationError,
    OdometryEstimate,
    Trajectory,
    TrajectoryPair,
    VioDriftState,
    VioEmulator,
    ate_survey_ensemble,
    compute_ate_rmse,
    fuse,
    load_tum,
    propagate_imu,
    run_survey_scalar,
    save_tum,
    survey_circle_state,
    vision_fix,
)
from navsim.sensors import ImuSample

ZERO_VIO = VioConfig(fix_position_sigma=0.0, fix_yaw_sigma=0.0, drift_rate_sigma=0.0)
ZERO_IMU = ImuNoiseConfig(0.0, 0.0, 0.0, 0.0)


def hover_sample(t):
    return ImuSample(np.zeros(3), np.array([0.0, 0.0, 9.81]), t)


def test_propagate_hover_stationary():
    est = OdometryEstimate(Pose(np.array([1.0, 2.0, 1.0])), np.zeros(3), 0.0)
    dt = 1.0 / 200.0
    for k in range(200):
        est = propagate_imu(est, hover_sample((k + 1) * dt), 9.81)
    assert np.linalg.norm(est.pose.position - [1.0, 2.0, 1.0]) < 1e-6
    assert est.source == "imu_propagated"


def test_propagate_constant_thrust_climb():
    est = OdometryEstimate(Pose(np.zeros(3)), np.zeros(3), 0.0)
    dt = 1.0 / 200.0
    for k in range(200):
        est = propagate_imu(est, ImuSample(np.zeros(3), np.array([0.0, 0.0, 10.81]), (k + 1) * dt), 9.81)
    assert est.velocity[2] == pytest.approx(1.0, abs=1e-9)
    assert est.pose.position[2] == pytest.approx(0.5, abs=5e-3)


def test_propagate_requires_increasing_time():
    est = OdometryEstimate(Pose(), np.zeros(3), 1.0)
    with pytest.raises(ValueError):
        propagate_imu(est, hover_sample(1.0), 9.81)


def test_propagate_circle_tracks_ground_truth():
    # zero-noise circular flight: strapdown path within 1e-2 m over 5 s
    imu_hz = 200.0
    dt = 1.0 / imu_hz
    n = int(5.0 * imu_hz)
    times = np.arange(n + 1) * dt
    pos, vel, yaw, acc, w_z = survey_circle_state(times, speed=1.0, length=80.0)
    est = OdometryEstimate(Pose(pos[0], quat_from_yaw(float(yaw[0]))), vel[0], 0.0)
    g = 9.81
    for k in range(1, n + 1):
        c, s = np.cos(yaw[k - 1]), np.sin(yaw[k - 1])
        f = acc[k - 1] + [0, 0, g]
        f_body = np.array([c * f[0] + s * f[1], -s * f[0] + c * f[1], f[2]])
        est = propagate_imu(est, ImuSample(np.array([0.0, 0.0, w_z]), f_body, k * dt), g)
        assert np.linalg.norm(est.pose.position - pos[k]) < 1e-2


# --- vision fixes ---


def test_vision_fix_zero_model_exact():
    rng = np.random.default_rng(0)
    drift = VioDriftState()
    gt = Pose(np.array([1.0, -2.0, 0.5]), quat_from_yaw(0.7))
    fix = vision_fix(gt, ZERO_VIO, drift, rng)
    assert np.array_equal(fix.position, gt.position)
    assert np.allclose(fix.q, gt.q, atol=1e-15)


def test_vision_fix_white_noise_std():
    model = VioConfig(fix_position_sigma=0.05, fix_yaw_sigma=0.0, drift_rate_sigma=0.0)
    rng = np.random.default_rng(123)
    drift = VioDriftState()
    gt = Pose(np.array([0.0, 0.0, 1.0]))
    fixes = np.array([vision_fix(gt, model, drift, rng).position for _ in range(10_000)])
    assert np.allclose(fixes.std(axis=0), 0.05, rtol=0.05)


def test_vision_fix_drift_grows_with_distance():
    model = VioConfig(fix_position_sigma=0.0, fix_yaw_sigma=0.0, drift_rate_sigma=0.05)
    finals = []
    for seed in range(300):
        rng = np.random.default_rng(seed)
        drift = VioDriftState()
        # walk 100 m in 1 m hops
        for k in range(101):
            vision_fix(Pose(np.array([float(k), 0.0, 1.0])), model, drift, rng)
        finals.append(drift.offset.copy())
    var = np.var(np.asarray(finals), axis=0).mean()
    assert var == pytest.approx(0.05**2 * 100.0, rel=0.15)


# --- fuse ---


def test_fuse_gain_one_replaces():
    prop = OdometryEstimate(Pose(np.zeros(3)), np.zeros(3), 1.0)
    fix = Pose(np.array([1.0, 0.0, 0.0]), quat_from_yaw(0.3))
    out = fuse(prop, fix, 1.0)
    assert np.allclose(out.pose.position, fix.position)
    assert np.allclose(out.pose.q, fix.q)
    assert out.source == "vision_corrected"


def test_fuse_gain_zero_identity():
    prop = OdometryEstimate(Pose(np.array([0.5, 0.5, 0.5])), np.array([1.0, 0, 0]), 1.0)
    fix = Pose(np.array([9.0, 9.0, 9.0]))
    out = fuse(prop, fix, 0.0)
    assert np.array_equal(out.pose.position, prop.pose.position)
    assert np.array_equal(out.velocity, prop.velocity)


def test_fuse_midpoint():
    prop = OdometryEstimate(Pose(np.zeros(3)), np.zeros(3), 1.0)
    out = fuse(prop, Pose(np.array([1.0, 0.0, 0.0])), 0.5)
    assert np.allclose(out.pose.position, [0.5, 0.0, 0.0])


def test_fuse_idempotent_at_gain_one():
    prop = OdometryEstimate(Pose(np.zeros(3)), np.array([0.3, 0.0, 0.0]), 1.0)
    fix = Pose(np.array([1.0, 2.0, 3.0]), quat_from_yaw(-0.4))
    once = fuse(prop, fix, 1.0)
    twice = fuse(once, fix, 1.0)
    assert np.array_equal(once.pose.position, twice.pose.position)
    assert np.array_equal(once.velocity, twice.velocity)
    assert np.allclose(once.pose.q, twice.pose.q, atol=1e-15)


# --- ATE ---


def straight_traj(n=100, offset=(0.0, 0.0, 0.0), dt=0.1):
    t = np.arange(n) * dt
    p = np.column_stack([t, np.zeros(n), np.ones(n)]) + np.asarray(offset)
    return Trajectory(t, p)


def test_ate_identical_zero():
    a = straight_traj()
    assert compute_ate_rmse(TrajectoryPair(a, a)) == 0.0


def test_ate_constant_offset():
    pair = TrajectoryPair(straight_traj(offset=(1.0, 0.0, 0.0)), straight_traj())
    assert compute_ate_rmse(pair, align="none") == pytest.approx(1.0, abs=1e-12)


def test_ate_yaw_rotation_recovered_by_alignment():
    gt = straight_traj(n=200)
    ang = np.deg2rad(10.0)
    c, s = np.cos(ang), np.sin(ang)
    R = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
    est = Trajectory(gt.times, gt.positions @ R.T)
    pair = TrajectoryPair(est, gt)
    assert compute_ate_rmse(pair, align="none") > 0.1
    assert compute_ate_rmse(pair, align="full_se3") < 1e-9
    assert compute_ate_rmse(pair, align="yaw_xy") < 1e-9


def test_ate_invariance_under_common_transform():
    rng = np.random.default_rng(8)
    gt = straight_traj(n=50)
    est = Trajectory(gt.times, gt.positions + rng.normal(0, 0.1, size=(50, 3)))
    base = compute_ate_rmse(TrajectoryPair(est, gt), align="none")
    # common time shift
    shifted = compute_ate_rmse(
        TrajectoryPair(Trajectory(est.times + 5.0, est.positions), Trajectory(gt.times + 5.0, gt.positions)),
        align="none",
    )
    assert shifted == pytest.approx(base, abs=1e-15)
    # common rigid transform
    ang = 0.83
    c, s = np.cos(ang), np.sin(ang)
    R = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
    tvec = np.array([3.0, -1.0, 2.0])
    both = compute_ate_rmse(
        TrajectoryPair(Trajectory(est.times, est.positions @ R.T + tvec),
                       Trajectory(gt.times, gt.positions @ R.T + tvec)),
        align="none",
    )
    assert both == pytest.approx(base, rel=1e-12)


def test_ate_association_tolerance():
    gt = straight_traj(n=50, dt=0.1)
    est = Trajectory(gt.times + 100.0, gt.positions)  # out of tolerance everywhere
    with pytest.raises(AssociationError):
        compute_ate_rmse(TrajectoryPair(est, gt))
    # a half-grid shift exceeds the 0.02 s association window too
    est2 = Trajectory(gt.times + 0.05, gt.positions)
    with pytest.raises(AssociationError):
        compute_ate_rmse(TrajectoryPair(est2, gt))


def test_tum_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    n = 20
    t = np.arange(n) * 0.5
    traj = Trajectory(t, rng.normal(size=(n, 3)), np.tile([1.0, 0, 0, 0], (n, 1)))
    path = tmp_path / "traj.tum"
    save_tum(path, traj)
    back = load_tum(path)
    assert np.allclose(back.times, traj.times, atol=1e-6)
    assert np.allclose(back.positions, traj.positions, atol=1e-8)


# --- end-to-end emulation ---


def test_emulator_zero_noise_tracks_truth():
    imu_hz, dur = 200.0, 10.0
    dt = 1.0 / imu_hz
    n = int(dur * imu_hz)
    times = np.arange(n + 1) * dt
    pos, vel, yaw, acc, w_z = survey_circle_state(times)
    emu = VioEmulator(ZERO_VIO, 9.81, Pose(pos[0], quat_from_yaw(float(yaw[0]))), vel[0], 0.0,
                      np.random.default_rng(0))
    worst = 0.0
    for k in range(1, n + 1):
        c, s = np.cos(yaw[k - 1]), np.sin(yaw[k - 1])
        f = acc[k - 1] + [0, 0, 9.81]
        f_body = np.array([c * f[0] + s * f[1], -s * f[0] + c * f[1], f[2]])
        emu.on_imu(ImuSample(np.array([0, 0, w_z]), f_body, k * dt))
        if k % 7 == 0:
            emu.on_vision(Pose(pos[k], quat_from_yaw(float(yaw[k]))))
        worst = max(worst, float(np.linalg.norm(emu.estimate.pose.position - pos[k])))
    assert worst < 1e-2


def test_vectorized_ensemble_matches_scalar_ops():
    # dual route: the lockstep ensemble must reproduce the scalar
    # propagate/fix/fuse pipeline on the same seed
    vio = VioConfig()
    imu = ImuNoiseConfig()
    scalar = run_survey_scalar(1234, vio, imu, duration=10.0)
    vec = ate_survey_ensemble(vio, imu, n_seeds=1, base_seed=1234, duration=10.0)[0]
    assert vec == pytest.approx(scalar, abs=1e-9)


def test_ate_ensemble_zero_noise_tiny():
    ates = ate_survey_ensemble(ZERO_VIO, ZERO_IMU, n_seeds=2, base_seed=0, duration=80.0)
    assert (ates < 0.02).all()


def test_ate_ensemble_default_calibration_quick():
    # 20-seed smoke check that the shipped drift default lands in band;
    # the full 100-seed run lives in the acceptance suite
    ates = ate_survey_ensemble(VioConfig(), ImuNoiseConfig(), n_seeds=20, base_seed=1000)
    assert 0.15 < ates.mean() < 0.45
