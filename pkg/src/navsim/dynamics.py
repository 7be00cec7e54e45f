"""6-DoF rigid-body dynamics and the cascaded flight controller.

State follows the standard quadrotor model: inertial position/velocity,
body->inertial attitude quaternion, body angular rate. Translational
dynamics integrate the body force rotated into the inertial frame plus
gravity; rotational dynamics follow Euler's equation with the gyroscopic
term. One step is classical RK4 with quaternion renormalization.

The controller replaces the autopilot inner loops: position P -> velocity
setpoint (speed-limited) -> velocity loop -> desired acceleration ->
desired attitude + thrust -> geometric attitude PD -> body wrench. Gains
are fixed constants tuned against the step-response regression test.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ControlConfig, SimConfig
from .geometry import (
    quat_from_yaw,
    quat_identity,
    quat_multiply,
    quat_normalize,
    quat_rotate,
    quat_to_matrix,
    matrix_to_quat,
)


class IntegrationDivergenceError(RuntimeError):
    def __init__(self, state):
        super().__init__("non-finite state after integration step")
        self.state = state


@dataclass(frozen=True)
class RigidBodyState:
    xi: np.ndarray = field(default_factory=lambda: np.zeros(3))  # position, m
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))  # velocity, m/s
    q: np.ndarray = field(default_factory=quat_identity)  # body -> inertial
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))  # body rate, rad/s

    def __post_init__(self):
        for name in ("xi", "v", "q", "omega"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    def is_finite(self) -> bool:
        return bool(
            np.isfinite(self.xi).all()
            and np.isfinite(self.v).all()
            and np.isfinite(self.q).all()
            and np.isfinite(self.omega).all()
        )


@dataclass(frozen=True)
class BodyWrench:
    force_B: np.ndarray  # N, body frame
    moment_B: np.ndarray  # N m, body frame

    def __post_init__(self):
        object.__setattr__(self, "force_B", np.asarray(self.force_B, dtype=float))
        object.__setattr__(self, "moment_B", np.asarray(self.moment_B, dtype=float))


@dataclass(frozen=True)
class Setpoint:
    kind: str  # "position" | "velocity"
    value: np.ndarray
    yaw: float = 0.0

    def __post_init__(self):
        if self.kind not in ("position", "velocity"):
            raise ValueError(f"unknown setpoint kind {self.kind!r}")
        object.__setattr__(self, "value", np.asarray(self.value, dtype=float))


def _deriv(xi, v, q, omega, force_B, moment_B, mass, inertia, gravity):
    a = quat_rotate(q, force_B) / mass
    a[2] -= gravity
    # quaternion kinematics: q_dot = 0.5 * q ⊗ (0, omega)
    w, x, y, z = q
    ox, oy, oz = omega
    q_dot = 0.5 * np.array(
        [
            -x * ox - y * oy - z * oz,
            w * ox + y * oz - z * oy,
            w * oy - x * oz + z * ox,
            w * oz + x * oy - y * ox,
        ]
    )
    Iw = inertia * omega
    omega_dot = (moment_B - np.cross(omega, Iw)) / inertia
    return v, a, q_dot, omega_dot


def step_dynamics(
    state: RigidBodyState,
    wrench: BodyWrench,
    mass: float,
    inertia_diag,
    gravity: float,
    dt: float,
) -> RigidBodyState:
    """One RK4 step of the rigid-body equations; dt must be in (0, 0.01]."""
    if not (0.0 < dt <= 0.01):
        raise ValueError(f"dt={dt} outside (0, 0.01]")
    inertia = np.asarray(inertia_diag, dtype=float)
    f, m = wrench.force_B, wrench.moment_B

    def deriv(xi, v, q, omega):
        return _deriv(xi, v, q, omega, f, m, mass, inertia, gravity)

    xi0, v0, q0, w0 = state.xi, state.v, state.q, state.omega
    k1 = deriv(xi0, v0, q0, w0)
    k2 = deriv(xi0 + 0.5 * dt * k1[0], v0 + 0.5 * dt * k1[1], q0 + 0.5 * dt * k1[2], w0 + 0.5 * dt * k1[3])
    k3 = deriv(xi0 + 0.5 * dt * k2[0], v0 + 0.5 * dt * k2[1], q0 + 0.5 * dt * k2[2], w0 + 0.5 * dt * k2[3])
    k4 = deriv(xi0 + dt * k3[0], v0 + dt * k3[1], q0 + dt * k3[2], w0 + dt * k3[3])

    xi = xi0 + (dt / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    v = v0 + (dt / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    q = q0 + (dt / 6.0) * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    omega = w0 + (dt / 6.0) * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])

    out = RigidBodyState(xi, v, quat_normalize(q), omega)
    if not out.is_finite():
        raise IntegrationDivergenceError(out)
    return out


def mechanical_energy(state: RigidBodyState, mass: float, inertia_diag, gravity: float) -> float:
    inertia = np.asarray(inertia_diag, dtype=float)
    ke = 0.5 * mass * float(state.v @ state.v)
    rot = 0.5 * float(state.omega @ (inertia * state.omega))
    pe = mass * gravity * float(state.xi[2])
    return ke + rot + pe


def _clamp_norm(vec: np.ndarray, limit: float) -> np.ndarray:
    n = float(np.linalg.norm(vec))
    if n > limit and n > 0.0:
        return vec * (limit / n)
    return vec


def _vee(M: np.ndarray) -> np.ndarray:
    return np.array([M[2, 1], M[0, 2], M[1, 0]])


def cascade_control(state: RigidBodyState, setpoint: Setpoint, config: SimConfig) -> BodyWrench:
    """Cascaded position/velocity/attitude controller -> body wrench.

    Stateless: gravity feedforward with exact mass knowledge gives zero
    steady-state offset without an integrator. Thrust is clamped to
    [0, 2mg] and commanded tilt to the configured limit.
    """
    c: ControlConfig = config.control
    m = config.vehicle_mass
    g = config.gravity
    inertia = np.asarray(config.inertia_diag, dtype=float)

    if setpoint.kind == "position":
        v_sp = c.kp_pos * (setpoint.value - state.xi)
    else:
        v_sp = setpoint.value
    v_sp = _clamp_norm(v_sp, config.speed_limit)

    a_des = _clamp_norm(c.kp_vel * (v_sp - state.v), c.max_accel)
    f_des = m * (a_des + np.array([0.0, 0.0, g]))  # desired rotor force, inertial

    # tilt clamp: cap the horizontal component relative to the vertical one
    fz = max(f_des[2], 0.05 * m * g)
    f_xy = f_des[:2]
    max_xy = fz * np.tan(c.tilt_limit)
    f_xy = _clamp_norm(f_xy, max_xy)
    f_des = np.array([f_xy[0], f_xy[1], fz])

    # desired attitude: body z along f_des, heading from the setpoint yaw
    z_b = f_des / np.linalg.norm(f_des)
    x_c = np.array([np.cos(setpoint.yaw), np.sin(setpoint.yaw), 0.0])
    y_b = np.cross(z_b, x_c)
    n_y = np.linalg.norm(y_b)
    if n_y < 1e-9:  # gimbal-lock fallback: z_b parallel to heading vector
        y_b = np.array([-np.sin(setpoint.yaw), np.cos(setpoint.yaw), 0.0])
    else:
        y_b = y_b / n_y
    x_b = np.cross(y_b, z_b)
    R_des = np.column_stack([x_b, y_b, z_b])

    R = quat_to_matrix(state.q)
    thrust = float(np.clip(f_des @ R[:, 2], 0.0, 2.0 * m * g))

    e_R = 0.5 * _vee(R_des.T @ R - R.T @ R_des)
    ang_acc = -c.kp_att * e_R - c.kd_att * state.omega
    moment = inertia * ang_acc + np.cross(state.omega, inertia * state.omega)

    return BodyWrench(np.array([0.0, 0.0, thrust]), moment)


def desired_quat_for(setpoint_yaw: float) -> np.ndarray:
    return quat_from_yaw(setpoint_yaw)


class CommandLatch:
    """Latest-wins setpoint latch with a hold-position failsafe.

    If no setpoint arrives for ``timeout`` seconds while in velocity mode,
    the latch degrades to holding the last known position (captured at the
    moment of expiry). With no setpoint ever received it holds the initial
    position.
    """

    def __init__(self, initial_position, initial_yaw: float = 0.0, timeout: float = 0.5):
        self._hold = Setpoint("position", np.asarray(initial_position, dtype=float), initial_yaw)
        self._latched: Setpoint | None = None
        self._latched_t = -np.inf
        self._timeout = timeout

    def offer(self, setpoint: Setpoint, t: float):
        self._latched = setpoint
        self._latched_t = t

    def current(self, t: float, state: RigidBodyState) -> Setpoint:
        if self._latched is None:
            return self._hold
        if self._latched.kind == "velocity" and t - self._latched_t > self._timeout:
            # stream went silent: freeze position where the timeout tripped
            self._hold = Setpoint("position", state.xi.copy(), self._latched.yaw)
            self._latched = None
            return self._hold
        return self._latched
