"""Reference generation: quintic joint profiles, the end-effector Jacobian,
and Cartesian set-point tracking through damped least squares."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import manipulator as mp
from .spatial import cross3
from .util import euler_xyz_to_matrix, rotation_log

DLS_MU = 1e-6
SIGMA_FLOOR = 1e-8


class TrajectoryError(ValueError):
    """Ill-formed reference specification."""


class JacobianSingularityError(RuntimeError):
    """End-effector Jacobian too close to singular for a rate solve."""


@dataclass(frozen=True)
class QuinticSegment:
    """Rest-to-rest quintic between two joint configurations."""

    p0: np.ndarray
    p1: np.ndarray
    t0: float
    t1: float

    def __post_init__(self):
        object.__setattr__(self, "p0", np.asarray(self.p0, dtype=float))
        object.__setattr__(self, "p1", np.asarray(self.p1, dtype=float))
        if self.t1 <= self.t0:
            raise TrajectoryError("segment needs t1 > t0")


def quintic_eval(seg: QuinticSegment, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Position, rate, and acceleration at time t, clamped to the segment."""
    T = seg.t1 - seg.t0
    tau = (t - seg.t0) / T
    if tau <= 0.0:
        return seg.p0.copy(), np.zeros_like(seg.p0), np.zeros_like(seg.p0)
    if tau >= 1.0:
        return seg.p1.copy(), np.zeros_like(seg.p0), np.zeros_like(seg.p0)
    s = tau**3 * (10.0 - 15.0 * tau + 6.0 * tau * tau)
    sd = tau**2 * (30.0 - 60.0 * tau + 30.0 * tau * tau) / T
    sdd = tau * (60.0 - 180.0 * tau + 120.0 * tau * tau) / (T * T)
    dp = seg.p1 - seg.p0
    return seg.p0 + dp * s, dp * sd, dp * sdd


@dataclass
class JointReference:
    """Piecewise-quintic joint reference with holds between segments."""

    segments: list[QuinticSegment]
    rest: np.ndarray

    def sample(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        current = self.rest
        for seg in self.segments:
            if t < seg.t0:
                break
            if t <= seg.t1:
                return quintic_eval(seg, t)
            current = seg.p1
        return current.copy(), np.zeros_like(current), np.zeros_like(current)

    def desired_state(self, t: float) -> mp.JointState:
        pos, rate, _ = self.sample(t)
        return mp.JointState(pos[:3], pos[3:], rate)


def build_joint_reference(spec: dict, initial: mp.JointState) -> JointReference:
    """Assemble the reference from a scenario 'reference' block."""
    start = np.concatenate([initial.zeta, initial.xi])
    kind = spec.get("type")
    if kind == "hold":
        return JointReference([], start)
    if kind != "joint_waypoints":
        raise TrajectoryError(f"cannot build a joint reference from type {kind!r}")
    segments = []
    current = start
    prev_end = -math.inf
    for raw in spec.get("segments", []):
        t0, t1 = float(raw["t0"]), float(raw["t1"])
        if t0 < prev_end:
            raise TrajectoryError("segments must not overlap")
        target = np.concatenate([
            np.asarray(raw.get("zeta", current[:3]), dtype=float),
            np.asarray(raw.get("xi", current[3:]), dtype=float),
        ])
        segments.append(QuinticSegment(current, target, t0, t1))
        current = target
        prev_end = t1
    return JointReference(segments, start)


def ee_pose(kin: mp.Kinematics) -> tuple[np.ndarray, np.ndarray]:
    """World rotation and position of the tool frame."""
    if "E4" not in kin.rot:
        raise TrajectoryError("rig has no tool frame")
    return kin.rot["E4"], kin.pos["E4"]


def jacobian_from_kinematics(kin: mp.Kinematics, model: mp.MachineModel) -> np.ndarray:
    """Geometric Jacobian: world pose rate [v; omega] of the tool origin per
    unit joint rate, columns in (zeta, xi) order."""
    if not model.has_wrist:
        raise TrajectoryError("full six-joint rig required for the Jacobian")
    p_e = kin.pos["E4"]
    cols = []
    axis0 = np.array([0.0, 1.0, 0.0])
    cols.append((axis0, kin.pos["P1"]))
    z = np.array([0.0, 0.0, 1.0])
    cols.append((model.chain1.q_sign * (kin.rot["B01"] @ z), kin.pos["B01"]))
    cols.append((model.chain2.q_sign * (kin.rot["B02"] @ z), kin.pos["B02"]))
    x = np.array([1.0, 0.0, 0.0])
    y = np.array([0.0, 1.0, 0.0])
    wm = model.wrist_mount.rotation
    cols.append((kin.rot["E12"] @ wm @ x, kin.pos["G1"]))
    cols.append((kin.rot["E2"] @ y, kin.pos["G2"]))
    cols.append((kin.rot["E3"] @ x, kin.pos["G3"]))
    J = np.zeros((6, 6))
    for i, (axis, point) in enumerate(cols):
        J[:3, i] = cross3(axis, p_e - point)
        J[3:, i] = axis
    return J


def jacobian(joints: mp.JointState, model: mp.MachineModel) -> np.ndarray:
    kin = mp.build_kinematics(joints, model)
    return jacobian_from_kinematics(kin, model)


def joint_rates_from_cartesian(
    J: np.ndarray, pose_rate: np.ndarray, mu: float = DLS_MU
) -> np.ndarray:
    """Damped least-squares rate solve; raises near singularities."""
    J = np.asarray(J, dtype=float)
    sigma_min = np.linalg.svd(J, compute_uv=False)[-1]
    if sigma_min < SIGMA_FLOOR:
        raise JacobianSingularityError(f"Jacobian sigma_min {sigma_min:.3e} under floor")
    A = J.T @ J + (mu * mu) * np.eye(J.shape[1])
    return np.linalg.solve(A, J.T @ np.asarray(pose_rate, dtype=float))


def _rodrigues(w: np.ndarray) -> np.ndarray:
    angle = float(np.linalg.norm(w))
    if angle < 1e-12:
        return np.eye(3)
    k = w / angle
    K = np.array([
        [0.0, -k[2], k[1]],
        [k[2], 0.0, -k[0]],
        [-k[1], k[0], 0.0],
    ])
    return np.eye(3) + math.sin(angle) * K + (1.0 - math.cos(angle)) * (K @ K)


@dataclass
class CartesianSegment:
    t0: float
    t1: float
    p_start: np.ndarray
    p_end: np.ndarray
    R_start: np.ndarray
    w_delta: np.ndarray  # body-frame rotation vector from R_start to R_end


class CartesianTracker:
    """Streams joint-space desired states that follow Cartesian set-points.

    The pose reference interpolates position and orientation with one quintic
    time scaling; joint rates come from the damped least-squares map with a
    proportional pose-error correction, and desired positions are integrated
    at the control rate.
    """

    def __init__(
        self,
        spec: dict,
        initial: mp.JointState,
        model: mp.MachineModel,
        correction_gain: float = 5.0,
        damping: float = 0.02,
        max_rate: float = 2.0,
    ):
        if spec.get("type") != "cartesian_setpoints":
            raise TrajectoryError("spec is not cartesian_setpoints")
        kin = mp.build_kinematics(initial, model)
        R, p = ee_pose(kin)
        self.model = model
        self.gain = correction_gain
        self.damping = damping
        self.max_rate = max_rate
        self.joints_d = initial.copy()
        self.segments: list[CartesianSegment] = []
        prev_end = -math.inf
        for raw in spec.get("segments", []):
            t0, t1 = float(raw["t0"]), float(raw["t1"])
            if t0 < prev_end:
                raise TrajectoryError("segments must not overlap")
            dpos = np.asarray(raw.get("dpos", (0.0, 0.0, 0.0)), dtype=float)
            drpy = np.asarray(raw.get("drpy", (0.0, 0.0, 0.0)), dtype=float)
            R_end = R @ euler_xyz_to_matrix(*drpy)
            p_end = p + dpos
            self.segments.append(CartesianSegment(
                t0, t1, p.copy(), p_end.copy(), R.copy(),
                rotation_log(R.T @ R_end),
            ))
            R, p = R_end, p_end
            prev_end = t1

    def pose_reference(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Desired world pose (R_d, p_d) and feedforward rate [v; omega]."""
        seg = None
        for s in self.segments:
            if t >= s.t0:
                seg = s
            else:
                break
        if seg is None:
            first = self.segments[0] if self.segments else None
            if first is None:
                kin = mp.build_kinematics(self.joints_d, self.model)
                R, p = ee_pose(kin)
                return R, p, np.zeros(6)
            return first.R_start, first.p_start, np.zeros(6)
        scalar = QuinticSegment(np.zeros(1), np.ones(1), seg.t0, seg.t1)
        s, sd, _ = quintic_eval(scalar, t)
        s, sd = float(s[0]), float(sd[0])
        p_d = seg.p_start + (seg.p_end - seg.p_start) * s
        R_d = seg.R_start @ _rodrigues(seg.w_delta * s)
        v = (seg.p_end - seg.p_start) * sd
        omega = seg.R_start @ (seg.w_delta * sd)
        return R_d, p_d, np.concatenate([v, omega])

    def step(self, t: float, dt: float) -> mp.JointState:
        """Advance the integrated joint-space reference by one control tick."""
        R_d, p_d, rate_ff = self.pose_reference(t)
        kin = mp.build_kinematics(self.joints_d, self.model)
        R, p = ee_pose(kin)
        pose_err = np.concatenate([p_d - p, R @ rotation_log(R.T @ R_d)])
        J = jacobian_from_kinematics(kin, self.model)
        rates = joint_rates_from_cartesian(
            J, rate_ff + self.gain * pose_err, mu=self.damping)
        peak = float(np.max(np.abs(rates)))
        if peak > self.max_rate:
            rates = rates * (self.max_rate / peak)
        zeta = self.joints_d.zeta + dt * rates[:3]
        xi = self.joints_d.xi + dt * rates[3:]
        if self.model.zeta_limits is not None:
            zeta = np.clip(
                zeta, self.model.zeta_limits[:, 0], self.model.zeta_limits[:, 1])
        if self.model.xi_limits is not None:
            xi = np.clip(xi, self.model.xi_limits[:, 0], self.model.xi_limits[:, 1])
        self.joints_d = mp.JointState(zeta, xi, rates)
        return self.joints_d.copy()
