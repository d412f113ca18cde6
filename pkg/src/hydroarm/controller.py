"""Per-tick control orchestration.

One tick turns a plant observation and a joint-space reference into six
valve voltages: required joint rates, required frame velocities, required
net wrenches per body, force backpropagation to required piston forces,
the flow/voltage laws per actuator, and every adaptation update. PD and
plain-VDC baselines share the entry point; VDC is the full pipeline with
the RBF and deadzone-backlash compensators switched off.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import actuator, constraint, rbfnn, rigidbody
from . import manipulator as mp
from .config import (
    ACTUATOR_ORDER,
    NetworkSettings,
    RigConfig,
    RigidGains,
    make_inverse_state,
)
from .util import DiffFilter


class ControllerError(RuntimeError):
    """Raised when a tick produces non-finite commands."""


BODY_CHI_DIM = 18
ACT_CHI_DIM = 5


def _default_motion() -> mp.MotionGains:
    return mp.MotionGains(3.0, (5.0, 5.0), (12.0, 12.0, 18.0))


@dataclass
class ControllerConfig:
    """Mode, gain set, and compensator switches for one controller instance."""

    rig: RigConfig
    mode: str = "rvdc"
    motion: mp.MotionGains = field(default_factory=_default_motion)
    rigid: RigidGains = field(default_factory=RigidGains)
    networks: NetworkSettings = field(default_factory=NetworkSettings)
    use_rbfnn: bool = True
    use_db_inverse: bool = True
    f_env: np.ndarray = field(default_factory=lambda: np.zeros(6))
    pd_kp: np.ndarray = field(default_factory=lambda: np.full(6, 3.0))
    pd_kd: np.ndarray = field(default_factory=lambda: np.full(6, 0.3))
    vpf_every: int = 50

    def __post_init__(self):
        if self.mode not in ("pd", "vdc", "rvdc"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode != "rvdc":
            self.use_rbfnn = False
            self.use_db_inverse = False
        self.f_env = np.asarray(self.f_env, dtype=float).reshape(6)
        self.pd_kp = np.asarray(self.pd_kp, dtype=float).reshape(6)
        self.pd_kd = np.asarray(self.pd_kd, dtype=float).reshape(6)


@dataclass
class Observation:
    """What the controller sees each tick.

    vels/kin may carry a forward pass already done by the caller at the same
    joint state; the tick recomputes them when absent.
    """

    joints: mp.JointState
    actuators: dict[str, actuator.ActuatorState]
    vels: dict[str, np.ndarray] | None = None
    kin: mp.Kinematics | None = None


@dataclass
class BodyChannel:
    """Adaptive state of one rigid-body subsystem."""

    L_hat: rigidbody.PseudoInertia
    net: rbfnn.RbfNetwork
    dvr_filter: DiffFilter


@dataclass
class ActuatorChannel:
    """Adaptive state of one hydraulic channel."""

    est: actuator.ActuatorEstimates
    fpr_filter: DiffFilter
    ufr_filter: DiffFilter
    z: float = 0.0


@dataclass
class ControllerState:
    bodies: dict[str, BodyChannel]
    actuators: dict[str, ActuatorChannel]
    ticks: int = 0


def build_controller_state(
    cfg: ControllerConfig,
    dt: float,
    seed: int,
    phi_scale: float = 0.2,
    theta_scale: float = 0.5,
) -> ControllerState:
    """Fresh adaptive state: scaled-truth parameter estimates, zero networks.

    Network centers draw from one seeded generator in a fixed order (bodies,
    then actuators), so a seed pins the whole initial state.
    """
    rng = np.random.default_rng(seed)
    model = cfg.rig.model
    bodies = {}
    for name in model.active_bodies():
        L_true = rigidbody.phi_to_L(model.bodies[name])
        L_hat = rigidbody.PseudoInertia(
            rigidbody.spd_repair(phi_scale * L_true.matrix))
        net = rbfnn.make_network(
            cfg.networks.body_nodes, BODY_CHI_DIM, 6, cfg.networks.body_width, rng)
        bodies[name] = BodyChannel(L_hat, net, DiffFilter(dt, shape=(6,)))
    acts = {}
    for setup in cfg.rig.actuator_list():
        est = actuator.ActuatorEstimates(
            np.zeros(7),
            theta_scale * setup.params.theta_v,
            theta_scale * setup.params.theta_d,
            make_inverse_state(setup),
            rbfnn.make_network(
                setup.nn_nodes, ACT_CHI_DIM, 1, cfg.networks.actuator_width, rng),
        )
        acts[setup.name] = ActuatorChannel(est, DiffFilter(dt), DiffFilter(dt))
    return ControllerState(bodies, acts)


@dataclass
class TickTelemetry:
    """Per-tick diagnostics; estimate norms keyed 'body:NAME' / 'act:NAME'."""

    e_joint: np.ndarray
    e_f: np.ndarray
    e_x: np.ndarray
    u_fr: np.ndarray
    v_fr: np.ndarray
    u: np.ndarray
    f_pr: np.ndarray
    f_cr: np.ndarray
    wrenches_r: dict[str, np.ndarray]
    e_v: dict[str, np.ndarray]
    est_norms: dict[str, float]
    vpf_residual: float
    degraded: bool


def vpf(v_r, v, f_r, f) -> float:
    """Virtual power flow (V_r - V) . (F_r - F) at one frame."""
    dv = np.asarray(v_r, dtype=float) - np.asarray(v, dtype=float)
    df = np.asarray(f_r, dtype=float) - np.asarray(f, dtype=float)
    return float(dv @ df)


@dataclass
class NetworkEval:
    """One side (required or actual) of a full force/velocity network pass."""

    vels: dict[str, np.ndarray]
    wrenches: dict[str, np.ndarray]
    piston: mp.PistonForces
    piston_rates: np.ndarray
    f_env: np.ndarray


def piston_vector(pf: mp.PistonForces, model: mp.MachineModel) -> np.ndarray:
    """Actuator forces as a 6-vector in the standard order, zeros if absent."""
    out = np.zeros(6)
    out[0] = pf.f_cp
    out[1:3] = pf.f_cj
    if model.has_wrist:
        out[3:6] = pf.f_cw
    return out


def vpf_network_residual(
    required: NetworkEval, actual: NetworkEval, model: mp.MachineModel
) -> float:
    """Telescoped VPF sum over the whole network.

    The body VPFs (from net wrenches) cancel against the actuator coupling
    terms and the tool boundary term, so the result is zero up to roundoff
    for any consistent pair of force/velocity passes. Passive pin joints
    contribute nothing: the backpropagated wrenches carry no moment about
    their free axes.
    """
    total = 0.0
    for name in model.active_bodies():
        total += vpf(
            required.vels[name], actual.vels[name],
            required.wrenches[name], actual.wrenches[name])
    f_r = piston_vector(required.piston, model)
    f_a = piston_vector(actual.piston, model)
    d_rate = required.piston_rates - actual.piston_rates
    total -= float(d_rate @ (f_r - f_a))
    if model.has_wrist:
        total += vpf(
            required.vels["E4"], actual.vels["E4"], required.f_env, actual.f_env)
    return total


def _required_piston_rates(rr: mp.RequiredRates, model: mp.MachineModel) -> np.ndarray:
    out = np.zeros(6)
    out[0] = rr.xp_r_dot
    out[1:3] = rr.xj_r_dot
    if model.has_wrist:
        out[3:6] = rr.xw_r_dot
    return out


def _actual_piston_rates(
    joints: mp.JointState, kin: mp.Kinematics, model: mp.MachineModel
) -> np.ndarray:
    out = np.zeros(6)
    out[0] = model.ratios.r_p * joints.rates[0]
    for jdx, cfg in enumerate(kin.chains):
        out[1 + jdx] = cfg.xdot
    if model.has_wrist:
        out[3:6] = np.asarray(model.ratios.r_w) * joints.rates[3:6]
    return out


def _joint_error(joints: mp.JointState, desired: mp.JointState) -> np.ndarray:
    return np.concatenate([desired.zeta - joints.zeta, desired.xi - joints.xi])


_CHANNEL_JOINT = {name: i for i, name in enumerate(ACTUATOR_ORDER)}


def _piston_rate_from_joint(
    cmd: float, idx: int, joints: mp.JointState, kin: mp.Kinematics,
    model: mp.MachineModel,
) -> float:
    """Map a joint-rate command to the matching piston rate."""
    if idx == 0:
        return model.ratios.r_p * cmd
    if idx in (1, 2):
        geom = model.chain1 if idx == 1 else model.chain2
        cfg = kin.chains[idx - 1]
        xdot, _, _ = mp.chain_rate_map(cfg.q, cfg.x, geom.q_sign * cmd, geom)
        return xdot
    return model.ratios.r_w[idx - 3] * cmd


def _pd_tick(
    obs: Observation,
    desired: mp.JointState,
    cfg: ControllerConfig,
    state: ControllerState,
) -> tuple[np.ndarray, TickTelemetry]:
    """Joint PD to a piston-rate command, mapped through the valve gain."""
    model = cfg.rig.model
    kin = obs.kin if obs.kin is not None else mp.build_kinematics(obs.joints, model)
    e = _joint_error(obs.joints, desired)
    edot = np.concatenate([
        desired.rates[:3] - obs.joints.rates[:3],
        desired.rates[3:] - obs.joints.rates[3:],
    ])
    u = np.zeros(6)
    u_fr = np.zeros(6)
    e_x = np.zeros(6)
    degraded = False
    for setup in cfg.rig.actuator_list():
        idx = _CHANNEL_JOINT[setup.name]
        cmd = cfg.pd_kp[idx] * e[idx] + cfg.pd_kd[idx] * edot[idx]
        xdot_cmd = _piston_rate_from_joint(cmd, idx, obs.joints, kin, model)
        ast = obs.actuators[setup.name]
        p = setup.params
        D_a = p.V_0a / p.A_a + ast.x
        D_b = p.V_0b / p.A_b + (p.stroke - ast.x)
        u_fr[idx] = xdot_cmd * (p.A_a / D_a + p.A_b / D_b)
        theta_v = state.actuators[setup.name].est.theta_v_hat
        u[idx], deg = actuator.uf_to_valve(u_fr[idx], ast, theta_v, p)
        degraded = degraded or deg
        e_x[idx] = xdot_cmd - ast.xdot
    tele = TickTelemetry(
        e_joint=e, e_f=np.zeros(6), e_x=e_x, u_fr=u_fr, v_fr=u_fr.copy(), u=u,
        f_pr=np.zeros(6), f_cr=np.zeros(6), wrenches_r={}, e_v={},
        est_norms={}, vpf_residual=0.0, degraded=degraded)
    return u, tele


def _chi_body(v, v_r, dv_r, networks: NetworkSettings) -> np.ndarray:
    sv, sa = networks.body_chi_scale
    return np.concatenate([v / sv, v_r / sv, dv_r / sa])


def _chi_actuator(ast: actuator.ActuatorState, e_f: float, networks: NetworkSettings) -> np.ndarray:
    s = networks.actuator_chi_scale
    return np.array([
        ast.x / s[0], ast.xdot / s[1], ast.p_a / s[2], ast.p_b / s[3], e_f / s[4]])


def control_tick(
    obs: Observation,
    desired: mp.JointState,
    cfg: ControllerConfig,
    state: ControllerState,
    dt: float,
) -> tuple[np.ndarray, ControllerState, TickTelemetry]:
    """One controller period: voltages out, adaptive state advanced in place.

    Raises ChainSingularityError from the kinematics on degenerate
    configurations and ControllerError when commands go non-finite; the
    caller aborts the run on either.
    """
    if cfg.mode == "pd":
        u, tele = _pd_tick(obs, desired, cfg, state)
        state.ticks += 1
        if not np.isfinite(u).all():
            raise ControllerError("non-finite valve command")
        return u, state, tele

    model = cfg.rig.model
    joints = obs.joints
    if obs.vels is not None and obs.kin is not None:
        vels, kin = obs.vels, obs.kin
    else:
        vels, kin = mp.forward_velocities(joints, model)
    vels_r, rr = mp.required_velocities(kin, joints, desired, model, cfg.motion)

    wrenches_r: dict[str, np.ndarray] = {}
    e_v: dict[str, np.ndarray] = {}
    regressors: dict[str, np.ndarray] = {}
    chis: dict[str, np.ndarray] = {}
    for name in model.active_bodies():
        ch = state.bodies[name]
        v = vels[name]
        v_r = vels_r[name]
        dv_r = ch.dvr_filter.step(v_r)
        g_body = kin.rot[name].T @ model.gravity
        Y = rigidbody.regressor(v_r, dv_r, g_body)
        phi_hat = rigidbody.phi_vector_from_L(ch.L_hat.matrix)
        e = v_r - v
        F = Y @ phi_hat + cfg.rigid.K_A * e
        if cfg.use_rbfnn:
            chi = _chi_body(v, v_r, dv_r, cfg.networks)
            F = F + rbfnn.predict(ch.net, chi)
            chis[name] = chi
        wrenches_r[name] = F
        e_v[name] = e
        regressors[name] = Y

    _, piston_r = mp.required_forces(kin, wrenches_r, cfg.f_env, model)
    f_cr6 = piston_vector(piston_r, model)
    xdot_r6 = _required_piston_rates(rr, model)

    u6 = np.zeros(6)
    u_fr6 = np.zeros(6)
    v_fr6 = np.zeros(6)
    e_f6 = np.zeros(6)
    e_x6 = np.zeros(6)
    f_pr6 = np.zeros(6)
    degraded = False
    est_norms: dict[str, float] = {}
    for setup in cfg.rig.actuator_list():
        idx = _CHANNEL_JOINT[setup.name]
        ch = state.actuators[setup.name]
        est = ch.est
        ast = obs.actuators[setup.name]
        p = setup.params
        g = setup.gains

        # friction feedforward at the required rate: nonzero static terms at
        # stall break the valve dead band and keep the adaptation drive signed
        # with the demanded motion
        Y_f, zdot = actuator.friction_regressor(xdot_r6[idx], ch.z, p)
        f_pr = f_cr6[idx] + float(Y_f @ est.theta_f_hat)
        fdot_pr = ch.fpr_filter.step(f_pr)
        e_f = f_pr - actuator.piston_force(ast, p)
        e_x = xdot_r6[idx] - ast.xdot

        rbf_a = 0.0
        chi_a = None
        if cfg.use_rbfnn:
            chi_a = _chi_actuator(ast, e_f, cfg.networks)
            rbf_a = float(rbfnn.predict(est.net, chi_a)[0])
        u_fr = actuator.required_uf(
            f_pr, fdot_pr, xdot_r6[idx], ast, est.theta_d_hat,
            g.k_f, g.k_x, rbf_a, p)
        udot_fr = ch.ufr_filter.step(u_fr)
        if cfg.use_db_inverse:
            v_fr = constraint.adaptive_inverse(u_fr, udot_fr, est.db, dt)
        else:
            v_fr = u_fr
        u, deg = actuator.uf_to_valve(v_fr, ast, est.theta_v_hat, p)
        degraded = degraded or deg

        Y_v = actuator.valve_regressor(u, ast, p)
        Y_d = actuator.pressure_regressor(fdot_pr, ast, p)
        est.theta_f_hat, est.theta_v_hat, est.theta_d_hat = actuator.adapt_theta_steps(
            est.theta_f_hat, est.theta_v_hat, est.theta_d_hat,
            e_f, e_x, Y_f, Y_v, Y_d, g, dt)
        if cfg.use_db_inverse:
            eta = constraint.db_error_regressor(v_fr, udot_fr, u_fr, est.db)
            est.db.theta_hat = constraint.adapt_db_step(
                est.db.theta_hat, eta, e_f, g.delta_db, g.delta_db0, g.k_x, dt)
            if g.theta_db_lo is not None:
                np.clip(est.db.theta_hat, g.theta_db_lo, g.theta_db_hi,
                        out=est.db.theta_hat)
        if cfg.use_rbfnn:
            rbfnn.adapt_actuator_step(
                est.net, chi_a, e_f, g.delta_a, g.delta_a0,
                g.bar_delta_a, g.bar_delta_a0, g.k_x, dt)
        ch.z += dt * zdot

        u6[idx] = u
        u_fr6[idx] = u_fr
        v_fr6[idx] = v_fr
        e_f6[idx] = e_f
        e_x6[idx] = e_x
        f_pr6[idx] = f_pr
        est_norms[f"act:{setup.name}"] = float(np.linalg.norm(est.flat()))

    for name in model.active_bodies():
        ch = state.bodies[name]
        s = regressors[name].T @ e_v[name]
        S = rigidbody.s_matrix(s)
        ch.L_hat = rigidbody.natural_adaptation_step(
            ch.L_hat, S, cfg.rigid.gamma, cfg.rigid.gamma0, dt)
        if cfg.use_rbfnn:
            rbfnn.adapt_rigid_step(
                ch.net, chis[name], e_v[name], cfg.rigid.Gamma, cfg.rigid.tau0,
                cfg.rigid.pi_gain, cfg.rigid.pi0, dt)
        est_norms[f"body:{name}"] = float(
            np.linalg.norm(rigidbody.phi_vector_from_L(ch.L_hat.matrix))
            + np.linalg.norm(ch.net.weights))

    residual = 0.0
    if cfg.vpf_every and state.ticks % cfg.vpf_every == 0:
        wrenches_a = {
            name: rigidbody.regressor(vels[name], np.zeros(6), kin.rot[name].T @ model.gravity)
            @ rigidbody.phi_vector_from_L(state.bodies[name].L_hat.matrix)
            for name in model.active_bodies()
        }
        _, piston_a = mp.backpropagate_forces(kin, wrenches_a, cfg.f_env, model)
        req = NetworkEval(vels_r, wrenches_r, piston_r, xdot_r6, cfg.f_env)
        act = NetworkEval(
            vels, wrenches_a, piston_a,
            _actual_piston_rates(joints, kin, model), cfg.f_env)
        residual = vpf_network_residual(req, act, model)

    state.ticks += 1
    if not np.isfinite(u6).all():
        raise ControllerError("non-finite valve command")
    tele = TickTelemetry(
        e_joint=_joint_error(joints, desired), e_f=e_f6, e_x=e_x6,
        u_fr=u_fr6, v_fr=v_fr6, u=u6, f_pr=f_pr6, f_cr=f_cr6,
        wrenches_r=wrenches_r, e_v=e_v, est_norms=est_norms,
        vpf_residual=residual, degraded=degraded)
    return u6, state, tele
