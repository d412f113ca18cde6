"""Machine model: pillar, two closed chains, and the three-gear wrist.

The topology is fixed (pillar yaw driven through a rack and pinion, two
planar closed chains driven by linear cylinders, three rotary-gear wrist
joints); only dimensions, masses, and mounts are data. Chains live in the
x-y plane of their base frame with all revolute axes along z.

Frame names used throughout: P1 (pillar), Pp2 (rack piston), per chain j the
bodies B0j (bracket), B1j (link), B3j (barrel), B4j (rod), the tip E1j and
pin P1j, plus wrist gears G1..G3 with inter-gear frames E2..E4. Chain-1 tip
E11 carries chain 2; chain-2 tip E12 carries the wrist; E4 is the tool
frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spatial import xform_velocity, xform_force
from .util import rot_x, rot_y, rot_z
from .rigidbody import InertialParams

X_F = np.array([1.0, 0.0, 0.0, 0.0, 0.0, 0.0])
Y_F = np.array([0.0, 1.0, 0.0, 0.0, 0.0, 0.0])
X_TAU = np.array([0.0, 0.0, 0.0, 1.0, 0.0, 0.0])
Y_TAU = np.array([0.0, 0.0, 0.0, 0.0, 1.0, 0.0])
Z_TAU = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 1.0])

SIN_GUARD = 1e-3
ACOS_SLACK = 1e-9

CHAIN1_ANGLE_OFFSET = -2.0736
CHAIN2_ANGLE_OFFSET = -0.4116

BODY_FRAMES = (
    "P1", "Pp2",
    "B01", "B11", "B31", "B41",
    "B02", "B12", "B32", "B42",
    "G1", "G2", "G3",
)

WRIST_AXES = ("x", "y", "x")
WRIST_SELECTORS = (X_TAU, Y_TAU, X_TAU)


class GeometryError(ValueError):
    """Configuration outside the chain's reachable triangle."""


class ChainSingularityError(RuntimeError):
    """Chain too close to a fold/stretch singularity for the rate maps."""


def passive_angles(zeta2: float, zeta3: float) -> tuple[float, float]:
    """Chain passive angles from the driven joint angles."""
    return CHAIN1_ANGLE_OFFSET - zeta2, zeta3 + CHAIN2_ANGLE_OFFSET


@dataclass(frozen=True)
class ChainGeometry:
    """Closed-chain dimensions.

    L_j: pivot-to-cylinder-base distance, L_j1: pivot-to-rod-attach distance
    along the link, x_j0: cylinder length at zero stroke, l_cj: rod-frame
    offset from the attach point. angle_offset and q_sign define
    q_j = q_sign * zeta + angle_offset. fy_term_positive flips the sign of
    the shear term in the closed-form piston force (the recursion-consistent
    default is the negative sign).
    """

    L_j: float
    L_j1: float
    x_j0: float
    l_cj: float
    angle_offset: float
    q_sign: float
    fy_term_positive: bool = False

    def __post_init__(self):
        for name in ("L_j", "L_j1", "x_j0", "l_cj"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.q_sign not in (-1.0, 1.0):
            raise ValueError("q_sign must be -1 or +1")

    def q_from_zeta(self, zeta: float) -> float:
        return self.q_sign * zeta + self.angle_offset

    def zeta_from_q(self, q: float) -> float:
        return self.q_sign * (q - self.angle_offset)


def chain_piston_position(q_j: float, geom: ChainGeometry) -> float:
    """x_j from the law of cosines on the (L_j, L_j1, cylinder) triangle."""
    d = geom.L_j**2 + geom.L_j1**2 + 2.0 * geom.L_j * geom.L_j1 * math.cos(q_j)
    if d <= 0.0:
        raise GeometryError(f"degenerate chain triangle at q_j={q_j}")
    return math.sqrt(d) - geom.x_j0


def _acos_clamped(arg: float, what: str) -> float:
    if abs(arg) > 1.0 + ACOS_SLACK:
        raise GeometryError(f"{what} outside reachable range (cos={arg})")
    return math.acos(min(1.0, max(-1.0, arg)))


def chain_angle_from_piston(x_j: float, geom: ChainGeometry) -> float:
    """q_j realizing piston position x_j; inverse of chain_piston_position
    on the working branch q_j in (-pi, 0)."""
    c = x_j + geom.x_j0
    cos_q = (c * c - geom.L_j**2 - geom.L_j1**2) / (2.0 * geom.L_j * geom.L_j1)
    return -_acos_clamped(cos_q, "piston position")


def chain_angles(x_j: float, geom: ChainGeometry) -> tuple[float, float]:
    """Passive pin angles (q_j1 at the cylinder base, q_j2 at the rod attach)."""
    c = x_j + geom.x_j0
    if c <= 0.0:
        raise GeometryError(f"non-positive cylinder length {c}")
    q_j1 = -_acos_clamped((c**2 + geom.L_j**2 - geom.L_j1**2) / (2.0 * c * geom.L_j), "q_j1")
    q_j2 = -_acos_clamped((c**2 + geom.L_j1**2 - geom.L_j**2) / (2.0 * c * geom.L_j1), "q_j2")
    return q_j1, q_j2


def _guard_chain(q_j1: float, q_j2: float) -> None:
    if abs(math.sin(q_j1)) < SIN_GUARD or abs(math.sin(q_j2)) < SIN_GUARD or abs(
        math.tan(q_j2)
    ) < SIN_GUARD:
        raise ChainSingularityError(
            f"chain rate map singular at q_j1={q_j1:.4f}, q_j2={q_j2:.4f}"
        )


def chain_rate_map(
    q_j: float, x_j: float, qdot_j: float, geom: ChainGeometry
) -> tuple[float, float, float]:
    """(xdot_j, qdot_j1, qdot_j2) for a passive-angle rate qdot_j."""
    c = x_j + geom.x_j0
    q_j1, q_j2 = chain_angles(x_j, geom)
    _guard_chain(q_j1, q_j2)
    xdot = -(geom.L_j * geom.L_j1 * math.sin(q_j) / c) * qdot_j
    qdot_j1 = -((c - geom.L_j * math.cos(q_j1)) / (c * geom.L_j * math.sin(q_j1))) * xdot
    qdot_j2 = -((c - geom.L_j1 * math.cos(q_j2)) / (c * geom.L_j1 * math.sin(q_j2))) * xdot
    return xdot, qdot_j1, qdot_j2


def chain_rate_inverse(q_j: float, x_j: float, xdot_j: float, geom: ChainGeometry) -> float:
    """qdot_j realizing a piston rate xdot_j."""
    s = math.sin(q_j)
    if abs(s) < SIN_GUARD:
        raise ChainSingularityError(f"piston rate map singular at q_j={q_j:.4f}")
    c = x_j + geom.x_j0
    return -c * xdot_j / (geom.L_j * geom.L_j1 * s)


@dataclass(frozen=True)
class GearRatios:
    """Rack-pinion radius and the three wrist gear ratios (metres)."""

    r_p: float
    r_w: tuple[float, float, float]

    def __post_init__(self):
        if self.r_p <= 0 or any(r <= 0 for r in self.r_w):
            raise ValueError("gear ratios must be positive")


@dataclass
class JointState:
    """Measured (or desired) joint configuration.

    zeta = (base yaw, lift, tilt), xi = wrist angles, rates the matching six
    joint rates in the same order.
    """

    zeta: np.ndarray
    xi: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        self.zeta = np.asarray(self.zeta, dtype=float).reshape(3)
        self.xi = np.asarray(self.xi, dtype=float).reshape(3)
        self.rates = np.asarray(self.rates, dtype=float).reshape(6)

    def copy(self) -> "JointState":
        return JointState(self.zeta.copy(), self.xi.copy(), self.rates.copy())


@dataclass(frozen=True)
class Mount:
    """Fixed parent-to-child frame placement."""

    rotation: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float).reshape(3, 3))
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=float).reshape(3))

    @classmethod
    def identity(cls) -> "Mount":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def z_rotation(cls, angle: float, offset=(0.0, 0.0, 0.0)) -> "Mount":
        return cls(rot_z(angle), np.asarray(offset, dtype=float))


@dataclass(frozen=True)
class MachineModel:
    """Full machine description; chain2/wrist may be absent for reduced rigs."""

    gravity: np.ndarray
    ratios: GearRatios
    bodies: dict[str, InertialParams]
    pillar_mount: Mount
    rack_mount: Mount
    chain1: ChainGeometry | None = None
    chain2: ChainGeometry | None = None
    chain2_mount: Mount | None = None
    wrist_mount: Mount | None = None
    wrist_links: tuple[float, float, float] = (0.0, 0.0, 0.0)
    zeta_limits: np.ndarray | None = None
    xi_limits: np.ndarray | None = None
    payload: InertialParams | None = None

    def __post_init__(self):
        object.__setattr__(self, "gravity", np.asarray(self.gravity, dtype=float).reshape(3))
        if self.chain2 is not None and self.chain1 is None:
            raise ValueError("chain2 requires chain1")
        if self.wrist_mount is not None and self.chain2 is None:
            raise ValueError("wrist requires both chains")
        for name in self.bodies:
            if name not in BODY_FRAMES:
                raise ValueError(f"unknown body frame {name}")

    @property
    def has_wrist(self) -> bool:
        return self.wrist_mount is not None

    def active_bodies(self) -> tuple[str, ...]:
        return tuple(n for n in BODY_FRAMES if n in self.bodies)

    def actuated_joints(self) -> tuple[int, ...]:
        """Indices into the 6-vector joint order that this rig actuates."""
        idx = [0]
        if self.chain1 is not None:
            idx.append(1)
        if self.chain2 is not None:
            idx.append(2)
        if self.has_wrist:
            idx.extend([3, 4, 5])
        return tuple(idx)


def validate_joints(model: MachineModel, joints: JointState) -> None:
    if model.zeta_limits is not None:
        lo, hi = model.zeta_limits[:, 0], model.zeta_limits[:, 1]
        if np.any(joints.zeta < lo) or np.any(joints.zeta > hi):
            raise GeometryError(f"zeta {joints.zeta} outside limits")
    if model.xi_limits is not None and model.has_wrist:
        lo, hi = model.xi_limits[:, 0], model.xi_limits[:, 1]
        if np.any(joints.xi < lo) or np.any(joints.xi > hi):
            raise GeometryError(f"xi {joints.xi} outside limits")


@dataclass
class ChainConfig:
    """Geometric state of one closed chain at a fixed instant."""

    q: float
    x: float
    c: float
    q1: float
    q2: float
    qdot: float = 0.0
    xdot: float = 0.0
    q1dot: float = 0.0
    q2dot: float = 0.0


@dataclass
class Kinematics:
    """Per-tick cache: edge transforms, absolute poses, chain configurations.

    edges maps child frame -> (parent frame, R, r) with ^parent U_child
    assembled from R and r.
    """

    edges: dict[str, tuple[str, np.ndarray, np.ndarray]]
    rot: dict[str, np.ndarray]
    pos: dict[str, np.ndarray]
    chains: list[ChainConfig]


def _chain_frames(
    geom: ChainGeometry, cfg: ChainConfig, j: int
) -> dict[str, tuple[str, np.ndarray, np.ndarray]]:
    z0 = np.zeros(3)
    b0, b1, b3, b4 = f"B0{j}", f"B1{j}", f"B3{j}", f"B4{j}"
    e1, p1, t2 = f"E1{j}", f"P1{j}", f"T2{j}"
    return {
        b1: (b0, rot_z(math.pi + cfg.q), z0),
        b3: (b0, rot_z(math.pi + cfg.q1), np.array([geom.L_j, 0.0, 0.0])),
        b4: (b3, np.eye(3), np.array([cfg.c - geom.l_cj, 0.0, 0.0])),
        p1: (b4, np.eye(3), np.array([geom.l_cj, 0.0, 0.0])),
        t2: (b4, rot_z(cfg.q2), np.array([geom.l_cj, 0.0, 0.0])),
        e1: (b1, np.eye(3), np.array([geom.L_j1, 0.0, 0.0])),
    }


def _chain_config(zeta: float, zetadot: float, geom: ChainGeometry) -> ChainConfig:
    q = geom.q_from_zeta(zeta)
    x = chain_piston_position(q, geom)
    q1, q2 = chain_angles(x, geom)
    _guard_chain(q1, q2)
    qdot = geom.q_sign * zetadot
    xdot, q1dot, q2dot = chain_rate_map(q, x, qdot, geom)
    return ChainConfig(q, x, x + geom.x_j0, q1, q2, qdot, xdot, q1dot, q2dot)


def build_kinematics(joints: JointState, model: MachineModel) -> Kinematics:
    """Assemble every frame transform at the measured configuration."""
    edges: dict[str, tuple[str, np.ndarray, np.ndarray]] = {}
    chains: list[ChainConfig] = []
    z0 = np.zeros(3)
    edges["P1"] = ("G", rot_y(joints.zeta[0]), z0)
    edges["Pp2"] = ("G", model.rack_mount.rotation, model.rack_mount.offset)
    if model.chain1 is not None:
        cfg1 = _chain_config(joints.zeta[1], joints.rates[1], model.chain1)
        chains.append(cfg1)
        edges["B01"] = ("P1", model.pillar_mount.rotation, model.pillar_mount.offset)
        edges.update(_chain_frames(model.chain1, cfg1, 1))
    if model.chain2 is not None:
        cfg2 = _chain_config(joints.zeta[2], joints.rates[2], model.chain2)
        chains.append(cfg2)
        edges["B02"] = ("E11", model.chain2_mount.rotation, model.chain2_mount.offset)
        edges.update(_chain_frames(model.chain2, cfg2, 2))
    if model.has_wrist:
        wm = model.wrist_mount
        d1, d2, d3 = model.wrist_links
        edges["G1"] = ("E12", wm.rotation @ rot_x(joints.xi[0]), wm.offset)
        edges["E2"] = ("G1", np.eye(3), np.array([d1, 0.0, 0.0]))
        edges["G2"] = ("E2", rot_y(joints.xi[1]), z0)
        edges["E3"] = ("G2", np.eye(3), np.array([d2, 0.0, 0.0]))
        edges["G3"] = ("E3", rot_x(joints.xi[2]), z0)
        edges["E4"] = ("G3", np.eye(3), np.array([d3, 0.0, 0.0]))
    rot = {"G": np.eye(3)}
    pos = {"G": np.zeros(3)}
    for child in _topo_order(edges):
        parent, R, r = edges[child]
        rot[child] = rot[parent] @ R
        pos[child] = pos[parent] + rot[parent] @ r
    return Kinematics(edges, rot, pos, chains)


def _topo_order(edges) -> list[str]:
    # parents are always inserted before children above; dict order suffices
    return list(edges)


def forward_velocities(
    joints: JointState, model: MachineModel, base_velocity: np.ndarray | None = None
) -> tuple[dict[str, np.ndarray], Kinematics]:
    """Spatial velocities of every frame from the joint rates."""
    kin = build_kinematics(joints, model)
    v = _velocity_recursion(
        kin, model,
        zeta1dot=joints.rates[0],
        chain_rates=[(c.qdot, c.q1dot, c.q2dot, c.xdot) for c in kin.chains],
        xi_rates=joints.rates[3:6],
        base_velocity=base_velocity,
    )
    return v, kin


def _velocity_recursion(
    kin: Kinematics,
    model: MachineModel,
    zeta1dot: float,
    chain_rates,
    xi_rates,
    base_velocity: np.ndarray | None,
) -> dict[str, np.ndarray]:
    e = kin.edges
    v: dict[str, np.ndarray] = {}
    vG = np.zeros(6) if base_velocity is None else np.asarray(base_velocity, dtype=float)
    _, R, r = e["P1"]
    v["P1"] = xform_velocity(R, r, vG) + Y_TAU * zeta1dot
    _, R, r = e["Pp2"]
    v["Pp2"] = xform_velocity(R, r, vG) + X_F * (model.ratios.r_p * zeta1dot)
    for jdx, cfg_rates in enumerate(chain_rates):
        j = jdx + 1
        qdot, q1dot, q2dot, xdot = cfg_rates
        b0, b1, b3, b4 = f"B0{j}", f"B1{j}", f"B3{j}", f"B4{j}"
        parent, R, r = e[b0]
        v[b0] = xform_velocity(R, r, v[parent])
        _, R, r = e[b1]
        v[b1] = Z_TAU * qdot + xform_velocity(R, r, v[b0])
        _, R, r = e[b3]
        v[b3] = Z_TAU * q1dot + xform_velocity(R, r, v[b0])
        _, R, r = e[b4]
        v[b4] = X_F * xdot + xform_velocity(R, r, v[b3])
        _, R, r = e[f"E1{j}"]
        v[f"E1{j}"] = xform_velocity(R, r, v[b1])
        _, R, r = e[f"T2{j}"]
        v[f"T2{j}"] = Z_TAU * q2dot + xform_velocity(R, r, v[b4])
    if model.has_wrist:
        prev = "E12"
        for i in range(3):
            g = f"G{i + 1}"
            _, R, r = e[g]
            v[g] = WRIST_SELECTORS[i] * xi_rates[i] + xform_velocity(R, r, v[prev])
            nxt = f"E{i + 2}"
            _, R, r = e[nxt]
            v[nxt] = xform_velocity(R, r, v[g])
            prev = nxt
    return v


@dataclass
class RequiredRates:
    """Joint- and piston-level required rates feeding the actuator layer."""

    zeta1r_dot: float
    xp_r_dot: float
    xj_r_dot: np.ndarray
    xi_r_dot: np.ndarray
    xw_r_dot: np.ndarray
    qj_r_dot: np.ndarray
    xj_d: np.ndarray
    xj_d_dot: np.ndarray


@dataclass(frozen=True)
class MotionGains:
    """Joint-space feedback gains for the required velocities."""

    lam: float
    lam_x: tuple[float, float]
    sigma: tuple[float, float, float]

    def __post_init__(self):
        if self.lam <= 0 or any(g <= 0 for g in self.lam_x) or any(g <= 0 for g in self.sigma):
            raise ValueError("motion gains must be positive")


def required_rates(
    joints: JointState, desired: JointState, model: MachineModel, gains: MotionGains
) -> RequiredRates:
    """Joint-level required rates from desired trajectory plus tracking error."""
    z1r = desired.rates[0] + gains.lam * (desired.zeta[0] - joints.zeta[0])
    xj_d = np.zeros(2)
    xj_d_dot = np.zeros(2)
    xj_r = np.zeros(2)
    qj_r = np.zeros(2)
    for jdx, geom in enumerate([model.chain1, model.chain2]):
        if geom is None:
            continue
        zd = desired.zeta[jdx + 1]
        zd_dot = desired.rates[jdx + 1]
        q_d = geom.q_from_zeta(zd)
        x_d = chain_piston_position(q_d, geom)
        xd_dot, _, _ = chain_rate_map(q_d, x_d, geom.q_sign * zd_dot, geom)
        xj_d[jdx] = x_d
        xj_d_dot[jdx] = xd_dot
        q_m = geom.q_from_zeta(joints.zeta[jdx + 1])
        x_m = chain_piston_position(q_m, geom)
        xj_r[jdx] = xd_dot + gains.lam_x[jdx] * (x_d - x_m)
        qj_r[jdx] = chain_rate_inverse(q_m, x_m, xj_r[jdx], geom)
    xi_r = desired.rates[3:6] + np.asarray(gains.sigma) * (desired.xi - joints.xi)
    return RequiredRates(
        zeta1r_dot=z1r,
        xp_r_dot=model.ratios.r_p * z1r,
        xj_r_dot=xj_r,
        xi_r_dot=xi_r,
        xw_r_dot=np.asarray(model.ratios.r_w) * xi_r,
        qj_r_dot=qj_r,
        xj_d=xj_d,
        xj_d_dot=xj_d_dot,
    )


def required_velocities(
    kin: Kinematics,
    joints: JointState,
    desired: JointState,
    model: MachineModel,
    gains: MotionGains,
    base_velocity: np.ndarray | None = None,
) -> tuple[dict[str, np.ndarray], RequiredRates]:
    """Required frame velocities: required joint rates pushed through the
    measured-configuration recursion."""
    rr = required_rates(joints, desired, model, gains)
    chain_rates = []
    for jdx, cfg in enumerate(kin.chains):
        geom = model.chain1 if jdx == 0 else model.chain2
        xr = rr.xj_r_dot[jdx]
        _, q1dot_r, q2dot_r = chain_rate_map(cfg.q, cfg.x, rr.qj_r_dot[jdx], geom)
        chain_rates.append((rr.qj_r_dot[jdx], q1dot_r, q2dot_r, xr))
    vr = _velocity_recursion(
        kin, model,
        zeta1dot=rr.zeta1r_dot,
        chain_rates=chain_rates,
        xi_rates=rr.xi_r_dot,
        base_velocity=base_velocity,
    )
    return vr, rr


@dataclass
class PistonForces:
    """Linear actuator forces extracted by the backpropagation."""

    f_cp: float
    f_cj: np.ndarray
    f_cw: np.ndarray


def _chain_backprop(
    kin: Kinematics,
    net: dict[str, np.ndarray],
    tip_load: np.ndarray,
    geom: ChainGeometry,
    cfg: ChainConfig,
    j: int,
    forces: dict[str, np.ndarray],
) -> tuple[np.ndarray, float]:
    """Pin solve plus force recursion for one chain.

    Returns the combined base reaction (B0j frame) and the closed-form
    piston force. The pin at the rod attach transmits in-plane force only;
    the link and barrel pivots carry no z-moment (frictionless pins).
    """
    e = kin.edges
    zeros = np.zeros(6)
    b0, b1, b3, b4 = f"B0{j}", f"B1{j}", f"B3{j}", f"B4{j}"
    e1, p1 = f"E1{j}", f"P1{j}"
    w0, w1, w3, w4 = (net.get(n, zeros) for n in (b0, b1, b3, b4))
    s2, c2 = math.sin(cfg.q2), math.cos(cfg.q2)
    _, R_e1, r_e1 = e[e1]
    tip_in_b1 = xform_force(R_e1, r_e1, tip_load)
    m1 = w1[5] + tip_in_b1[5]
    m3 = w3[5]
    m4 = w4[5]
    fy4 = w4[1]
    b = -(m3 + m4 + (cfg.c - geom.l_cj) * fy4) / cfg.c
    a = (b * c2 - m1 / geom.L_j1) / s2
    pin = np.array([a, b, 0.0, 0.0, 0.0, 0.0])
    forces[p1] = pin
    _, R, r = e[p1]
    forces[b4] = w4 + xform_force(R, r, pin)
    _, R, r = e[b4]
    forces[b3] = w3 + xform_force(R, r, forces[b4])
    _, R, r = e[b3]
    f_b2 = xform_force(R, r, forces[b3])
    # loop-closure edge ^B1j U_P1j, not in the tree
    R_p = rot_z(-cfg.q2)
    r_p = np.array([geom.L_j1, 0.0, 0.0])
    forces[b1] = w1 + tip_in_b1 - xform_force(R_p, r_p, pin)
    _, R, r = e[b1]
    forces[b0] = w0 + xform_force(R, r, forces[b1])
    base_reaction = forces[b0] + f_b2
    tan2 = math.tan(cfg.q2)
    shear = (fy4 * (cfg.c - geom.l_cj)) / (cfg.c * tan2)
    f_cj = w4[0] - m1 / (geom.L_j1 * s2) - (m3 + m4) / (cfg.c * tan2)
    f_cj = f_cj + shear if geom.fy_term_positive else f_cj - shear
    return base_reaction, f_cj


def backpropagate_forces(
    kin: Kinematics,
    net: dict[str, np.ndarray],
    f_env: np.ndarray,
    model: MachineModel,
) -> tuple[dict[str, np.ndarray], PistonForces]:
    """Propagate net wrenches down to the base and extract actuator forces.

    net maps body frames to their net wrenches (absent bodies count as
    massless); f_env is the environment wrench at the tool frame E4.
    """
    e = kin.edges
    zeros = np.zeros(6)

    def get(name: str) -> np.ndarray:
        return net.get(name, zeros)

    forces: dict[str, np.ndarray] = {}
    f_cw = np.zeros(3)
    if model.has_wrist:
        forces["E4"] = np.asarray(f_env, dtype=float)
        for i in (2, 1, 0):
            g = f"G{i + 1}"
            nxt = f"E{i + 2}"
            _, R, r = e[nxt]
            forces[g] = get(g) + xform_force(R, r, forces[nxt])
            f_cw[i] = float(WRIST_SELECTORS[i] @ forces[g]) / model.ratios.r_w[i]
            if i > 0:
                _, R, r = e[g]
                forces[f"E{i + 1}"] = xform_force(R, r, forces[g])
        _, R, r = e["G1"]
        wrist_base_load = xform_force(R, r, forces["G1"])
    elif f_env is not None and np.any(np.asarray(f_env) != 0.0):
        raise ValueError("environment wrench requires the wrist")
    f_cj = np.zeros(2)
    if model.chain2 is not None:
        wrist_tip = wrist_base_load if model.has_wrist else zeros
        reaction2, f_cj[1] = _chain_backprop(
            kin, net, wrist_tip, model.chain2, kin.chains[1], 2, forces
        )
        _, R, r = e["B02"]
        chain1_tip = xform_force(R, r, reaction2)
    else:
        chain1_tip = zeros
    if model.chain1 is not None:
        reaction1, f_cj[0] = _chain_backprop(
            kin, net, chain1_tip, model.chain1, kin.chains[0], 1, forces
        )
        _, R, r = e["B01"]
        p1_force = get("P1") + xform_force(R, r, reaction1)
    else:
        p1_force = get("P1").copy()
    forces["P1"] = p1_force
    forces["Pp2"] = get("Pp2")
    f_cp = float(Y_TAU @ p1_force) / model.ratios.r_p + float(X_F @ forces["Pp2"])
    return forces, PistonForces(f_cp=f_cp, f_cj=f_cj, f_cw=f_cw)


def required_forces(
    kin: Kinematics,
    required_net: dict[str, np.ndarray],
    f_env_r: np.ndarray,
    model: MachineModel,
) -> tuple[dict[str, np.ndarray], PistonForces]:
    """Identical recursion applied to required net wrenches."""
    return backpropagate_forces(kin, required_net, f_env_r, model)
