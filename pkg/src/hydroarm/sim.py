"""Closed-loop runs: fixed-step control/plant interleave, telemetry, metrics.

One controller tick per dt_control; each actuator integrates dt_control /
dt_plant RK4 substeps against a quasi-static mechanism load recomputed at the
tick boundary. The compound deadzone-backlash constraint sits between the
controller voltage and the plant valve, at the control rate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import actuator, constraint, controller, rigidbody, trajectory
from . import manipulator as mp
from .config import ACTUATOR_ORDER, RigConfig, Scenario
from .spatial import cross3

CSV_SCHEMA = "hydroarm-csv 1"
METRICS_SCHEMA = "hydroarm-metrics 1"

JOINT_LABELS = ("zeta1", "zeta2", "zeta3", "xi1", "xi2", "xi3")

_JOINT_INDEX = {name: i for i, name in enumerate(ACTUATOR_ORDER)}
_GROUPS = ("q", "qd", "e", "u", "ua", "ufr", "vfr", "fp", "fpr", "x", "pa", "pb")

_ABORTS = (
    mp.GeometryError,
    mp.ChainSingularityError,
    controller.ControllerError,
    actuator.PlantError,
    trajectory.JacobianSingularityError,
)


class SimError(RuntimeError):
    """Scenario cannot be set up as configured."""


class MetricsError(ValueError):
    """Report cannot be computed from the result."""


# ---------------------------------------------------------------------------
# joint <-> piston maps


def pistons_from_joints(joints: mp.JointState, rig: RigConfig) -> dict[str, tuple[float, float]]:
    """Piston (x, xdot) per channel realizing the given joint state."""
    model = rig.model
    out = {}
    for setup in rig.actuator_list():
        idx = _JOINT_INDEX[setup.name]
        stroke = setup.params.stroke
        if idx == 0:
            r = model.ratios.r_p
            out[setup.name] = (0.5 * stroke + r * joints.zeta[0], r * joints.rates[0])
        elif idx in (1, 2):
            geom = model.chain1 if idx == 1 else model.chain2
            q = geom.q_from_zeta(joints.zeta[idx])
            x = mp.chain_piston_position(q, geom)
            xdot, _, _ = mp.chain_rate_map(q, x, geom.q_sign * joints.rates[idx], geom)
            out[setup.name] = (x, xdot)
        else:
            r = model.ratios.r_w[idx - 3]
            out[setup.name] = (0.5 * stroke + r * joints.xi[idx - 3], r * joints.rates[idx])
    return out


def joints_from_pistons(
    plant: dict[str, actuator.ActuatorState], rig: RigConfig, fallback: mp.JointState
) -> mp.JointState:
    """Joint state implied by the piston states; joints without a channel
    hold the fallback position at zero rate."""
    model = rig.model
    zeta = fallback.zeta.copy()
    xi = fallback.xi.copy()
    rates = np.zeros(6)
    for name, ast in plant.items():
        idx = _JOINT_INDEX[name]
        stroke = rig.actuators[name].params.stroke
        if idx == 0:
            r = model.ratios.r_p
            zeta[0] = (ast.x - 0.5 * stroke) / r
            rates[0] = ast.xdot / r
        elif idx in (1, 2):
            geom = model.chain1 if idx == 1 else model.chain2
            q = mp.chain_angle_from_piston(ast.x, geom)
            zeta[idx] = geom.zeta_from_q(q)
            rates[idx] = geom.q_sign * mp.chain_rate_inverse(q, ast.x, ast.xdot, geom)
        else:
            r = model.ratios.r_w[idx - 3]
            xi[idx - 3] = (ast.x - 0.5 * stroke) / r
            rates[idx] = ast.xdot / r
    return mp.JointState(zeta, xi, rates)


def quasi_static_loads(
    joints: mp.JointState, rig: RigConfig, f_env: np.ndarray
) -> tuple[np.ndarray, mp.Kinematics, dict[str, np.ndarray]]:
    """Piston loads backpropagated from the true-parameter body wrenches at
    the measured state with zero acceleration. The mechanism's acceleration
    reaction is carried by m_piston on the plant side instead."""
    model = rig.model
    vels, kin = mp.forward_velocities(joints, model)
    wrenches = {}
    for name in model.active_bodies():
        g_body = kin.rot[name].T @ model.gravity
        wrenches[name] = rigidbody.net_wrench(
            model.bodies[name], vels[name], np.zeros(6), g_body)
    _, pf = mp.backpropagate_forces(kin, wrenches, f_env, model)
    return controller.piston_vector(pf, model), kin, vels


def equilibrium_pressures(f_load: float, params: actuator.ActuatorParams) -> tuple[float, float]:
    """Chamber pressures balancing a static load, biased to mid-pressure.

    Clipped 10 kPa inside the rail bounds; a clipped start leaves a small
    force imbalance that settles in the first transient."""
    p_mid = 0.5 * (params.p_s + params.p_r)
    level = p_mid * (params.A_a + params.A_b)
    margin = 1e4
    lo, hi = params.p_r + margin, params.p_s - margin
    p_a = min(max((level + f_load) / (2.0 * params.A_a), lo), hi)
    p_b = min(max((level - f_load) / (2.0 * params.A_b), lo), hi)
    return p_a, p_b


def tool_point(model: mp.MachineModel) -> tuple[str, np.ndarray]:
    """Frame and local offset of the point used for Cartesian metrics.

    Rigs without a wrist track a point one metre out on the pillar x-axis so
    yaw motion registers as tool motion."""
    if model.has_wrist:
        return "E4", np.zeros(3)
    return "P1", np.array([1.0, 0.0, 0.0])


# ---------------------------------------------------------------------------
# result container


@dataclass
class SimResult:
    """Uniformly sampled run telemetry, one row per control tick."""

    scenario: str
    mode: str
    seed: int
    dt: float
    columns: list[str]
    data: np.ndarray
    aborted: bool = False
    abort_reason: str = ""
    abort_tick: int = -1

    def series(self, name: str) -> np.ndarray:
        try:
            return self.data[:, self.columns.index(name)]
        except ValueError:
            raise KeyError(f"no column {name!r}") from None


def _column_names(rig: RigConfig, audit: bool) -> list[str]:
    names = ["t"]
    for grp in _GROUPS:
        names.extend(f"{grp}{i}" for i in range(6))
    names.extend(["ee_err", "ee_speed", "vpf", "degraded"])
    names.extend(f"na_{n}" for n in ACTUATOR_ORDER if n in rig.actuators)
    names.extend(f"nb_{n}" for n in rig.model.active_bodies())
    if audit:
        names.append("nu")
    return names


# ---------------------------------------------------------------------------
# stability surrogate


def accompanying_value(
    cfg: controller.ControllerConfig,
    state: controller.ControllerState,
    tele: controller.TickTelemetry,
) -> float:
    """Discrete accompanying function: tracking-error energy plus
    gain-weighted parameter-error energy against the true plant.

    Networks approximate residuals whose ideal weights are taken as zero, so
    their estimate energy enters directly. The deadzone-backlash compensator
    is excluded: its flow-level target depends on the operating point, so no
    static truth exists to measure against."""
    model = cfg.rig.model
    total = 0.0
    for name in model.active_bodies():
        ch = state.bodies[name]
        phi = model.bodies[name]
        e = tele.e_v[name]
        M = rigidbody.mass_matrix(phi)
        total += 0.5 * float(e @ M @ e)
        total += cfg.rigid.gamma * rigidbody.bregman_divergence(
            rigidbody.phi_to_L(phi), ch.L_hat)
        total += 0.5 / cfg.rigid.Gamma * float(np.sum(ch.net.weights**2))
        total += 0.5 / cfg.rigid.pi_gain * float(np.sum(ch.net.bias**2))
    for setup in cfg.rig.actuator_list():
        idx = _JOINT_INDEX[setup.name]
        est = state.actuators[setup.name].est
        g = setup.gains
        p = setup.params
        e_f = tele.e_f[idx]
        total += e_f * e_f / (2.0 * p.beta * g.k_x)
        total += g.k_x * float(
            np.sum((p.friction_phi - est.theta_f_hat) ** 2 / (2.0 * g.gamma_f)))
        total += g.k_x * float(
            np.sum((p.theta_v - est.theta_v_hat) ** 2 / (2.0 * g.gamma_v)))
        total += g.k_x * float(
            np.sum((p.theta_d - est.theta_d_hat) ** 2 / (2.0 * g.gamma_d)))
        if cfg.use_rbfnn:
            total += g.k_x / (2.0 * g.delta_a) * float(np.sum(est.net.weights**2))
            total += g.k_x / (2.0 * g.bar_delta_a) * float(np.sum(est.net.bias**2))
    return total


def stability_constants(scenario: Scenario) -> dict:
    """Declared decay rate and drift offset for the accompanying function.

    mu_bar is the slowest leakage or feedback rate among the blocks with a
    meaningful leakage path; the valve and pressure estimators adapt with
    near-zero leakage, so they contribute drift (through mu0_bar) but are not
    counted in the rate. mu0_bar collects the sigma-modification truth terms."""
    rig = scenario.rig
    rates = [
        scenario.rigid.pi_gain * scenario.rigid.pi0,
        scenario.rigid.Gamma * scenario.rigid.tau0,
        scenario.rigid.gamma * scenario.rigid.gamma0,
    ]
    mu0 = 0.0
    for name in rig.model.active_bodies():
        phi = rig.model.bodies[name]
        M = rigidbody.mass_matrix(phi)
        lam_max = float(np.linalg.eigvalsh(M)[-1])
        rates.append(2.0 * scenario.rigid.K_A / lam_max)
        mu0 += 0.5 * scenario.rigid.gamma * scenario.rigid.gamma0 * float(
            np.sum(phi.phi**2))
    for setup in rig.actuator_list():
        g = setup.gains
        p = setup.params
        rates.append(float(np.min(g.gamma_f)) * g.gamma_f0)
        rates.append(p.beta * g.k_f)
        mu0 += 0.5 * g.k_x * (
            g.gamma_f0 * float(np.sum(p.friction_phi**2))
            + g.gamma_v0 * float(np.sum(p.theta_v**2))
            + g.gamma_d0 * float(np.sum(p.theta_d**2))
        )
    mu_bar = min(rates)
    return {"mu_bar": mu_bar, "mu0_bar": mu0, "offset": mu0 / mu_bar}


# ---------------------------------------------------------------------------
# main loop


def run(scenario: Scenario, audit_every: int = 0) -> SimResult:
    """Integrate one scenario; deterministic given the scenario seed.

    audit_every > 0 evaluates the accompanying function every that many ticks
    (held between evaluations) into an extra 'nu' column. Aborts truncate the
    series at the failing tick and set the abort fields."""
    rig = scenario.rig
    model = rig.model
    dt = scenario.dt_control
    dt_plant = scenario.dt_plant
    substeps = scenario.plant_substeps

    cfg = controller.ControllerConfig(
        rig=rig, mode=scenario.mode, motion=scenario.motion,
        rigid=scenario.rigid, networks=scenario.networks, f_env=scenario.f_env)
    state = controller.build_controller_state(
        cfg, dt, scenario.seed,
        phi_scale=scenario.phi_init_scale, theta_scale=scenario.theta_init_scale)

    if scenario.reference.get("type") == "cartesian_setpoints":
        tracker = trajectory.CartesianTracker(scenario.reference, scenario.initial, model)
        ref = None
    else:
        tracker = None
        ref = trajectory.build_joint_reference(scenario.reference, scenario.initial)

    f0, _, _ = quasi_static_loads(scenario.initial, rig, scenario.f_env)
    plant: dict[str, actuator.ActuatorState] = {}
    db_states: dict[str, constraint.DbState] = {}
    start = pistons_from_joints(scenario.initial, rig)
    setups = rig.actuator_list()
    for setup in setups:
        x0, xd0 = start[setup.name]
        if not 0.0 < x0 < setup.params.stroke:
            raise SimError(
                f"{setup.name}: initial piston position {x0:.4f} outside the stroke")
        p_a, p_b = equilibrium_pressures(f0[_JOINT_INDEX[setup.name]], setup.params)
        plant[setup.name] = actuator.ActuatorState(p_a, p_b, x0, xd0)
        db_states[setup.name] = constraint.DbState(0.0, 0.0)

    n_ticks = int(round(scenario.duration / dt))
    cols = _column_names(rig, audit_every > 0)
    ci = {name: i for i, name in enumerate(cols)}
    data = np.zeros((n_ticks, len(cols)))
    frame, offset = tool_point(model)
    act_rows = [
        (s.name, _JOINT_INDEX[s.name], s.params, s.plant_db) for s in setups]
    nu_held = 0.0

    aborted = False
    reason = ""
    abort_tick = -1
    for k in range(n_ticks):
        t = k * dt
        try:
            joints = joints_from_pistons(plant, rig, scenario.initial)
            f_load, kin, vels = quasi_static_loads(joints, rig, scenario.f_env)
            desired = tracker.step(t, dt) if tracker else ref.desired_state(t)
            obs = controller.Observation(joints, plant, vels, kin)
            u6, state, tele = controller.control_tick(obs, desired, cfg, state, dt)

            kin_d = mp.build_kinematics(desired, model)
            p_tool = kin.pos[frame] + kin.rot[frame] @ offset
            p_tool_d = kin_d.pos[frame] + kin_d.rot[frame] @ offset
            v6 = vels[frame]
            v_tool = kin.rot[frame] @ (v6[:3] + cross3(v6[3:], offset))

            row = data[k]
            row[0] = t
            for name, idx, p, dbp in act_rows:
                st = plant[name]
                ua, db_states[name] = constraint.compound_db(
                    u6[idx], db_states[name], dbp)
                row[ci[f"x{idx}"]] = st.x
                row[ci[f"pa{idx}"]] = st.p_a
                row[ci[f"pb{idx}"]] = st.p_b
                row[ci[f"fp{idx}"]] = actuator.piston_force(st, p)
                row[ci[f"ua{idx}"]] = ua
                for _ in range(substeps):
                    st = actuator.plant_step(st, ua, f_load[idx], p, dt_plant)
                plant[name] = st

            row[ci["q0"]:ci["q0"] + 6] = np.concatenate([joints.zeta, joints.xi])
            row[ci["qd0"]:ci["qd0"] + 6] = np.concatenate([desired.zeta, desired.xi])
            row[ci["e0"]:ci["e0"] + 6] = tele.e_joint
            row[ci["u0"]:ci["u0"] + 6] = u6
            row[ci["ufr0"]:ci["ufr0"] + 6] = tele.u_fr
            row[ci["vfr0"]:ci["vfr0"] + 6] = tele.v_fr
            row[ci["fpr0"]:ci["fpr0"] + 6] = tele.f_pr
            row[ci["ee_err"]] = float(np.linalg.norm(p_tool - p_tool_d))
            row[ci["ee_speed"]] = float(np.linalg.norm(v_tool))
            row[ci["vpf"]] = tele.vpf_residual
            row[ci["degraded"]] = float(tele.degraded)
            for key, val in tele.est_norms.items():
                kind, _, name = key.partition(":")
                row[ci[f"na_{name}" if kind == "act" else f"nb_{name}"]] = val
            if audit_every and k % audit_every == 0:
                nu_held = accompanying_value(cfg, state, tele)
            if audit_every:
                row[ci["nu"]] = nu_held
        except _ABORTS as exc:
            aborted = True
            reason = f"{type(exc).__name__}: {exc}"
            abort_tick = k
            data = data[:k]
            break

    if not aborted and not np.isfinite(data).all():
        aborted = True
        reason = "non-finite telemetry"
        abort_tick = n_ticks
    return SimResult(
        scenario=scenario.name, mode=scenario.mode, seed=scenario.seed, dt=dt,
        columns=cols, data=data, aborted=aborted, abort_reason=reason,
        abort_tick=abort_tick)


# ---------------------------------------------------------------------------
# output


def write_csv(result: SimResult, path: str | Path) -> None:
    """Versioned-header CSV, one row per control tick, %.17g throughout."""
    path = Path(path)
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# {CSV_SCHEMA}\n")
        fh.write(f"# scenario: {result.scenario}\n")
        fh.write(f"# mode: {result.mode}\n")
        fh.write(f"# seed: {result.seed}\n")
        fh.write(f"# dt: {result.dt:.17g}\n")
        fh.write(f"# aborted: {int(result.aborted)}\n")
        fh.write(",".join(result.columns) + "\n")
        np.savetxt(fh, result.data, fmt="%.17g", delimiter=",")


def read_csv(path: str | Path) -> SimResult:
    """Inverse of write_csv (abort reason is not round-tripped)."""
    path = Path(path)
    meta = {}
    with open(path) as fh:
        first = fh.readline().strip()
        if first != f"# {CSV_SCHEMA}":
            raise SimError(f"{path}: expected '# {CSV_SCHEMA}' header")
        pos = fh.tell()
        line = fh.readline()
        while line.startswith("#"):
            key, _, val = line[1:].partition(":")
            meta[key.strip()] = val.strip()
            pos = fh.tell()
            line = fh.readline()
        columns = line.strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size == 0:
        data = data.reshape(0, len(columns))
    return SimResult(
        scenario=meta.get("scenario", path.stem),
        mode=meta.get("mode", ""),
        seed=int(meta.get("seed", 0)),
        dt=float(meta.get("dt", 0.0)),
        columns=columns,
        data=data,
        aborted=bool(int(meta.get("aborted", 0))),
    )


def metrics(
    result: SimResult,
    cartesian: np.ndarray | None = None,
    t_start: float = 0.0,
    t_end: float = math.inf,
) -> dict:
    """Per-joint |e|_max / e_rms / u_rms plus the Cartesian performance ratio
    rho = |e|_max / |xdot|_max over [t_start, t_end].

    cartesian overrides the stored tool series: column 0 position error
    norm, column 1 tool speed. Zero peak speed leaves rho undefined."""
    if result.data.shape[0] == 0:
        raise MetricsError("empty result")
    t = result.series("t")
    mask = (t >= t_start) & (t <= t_end)
    if not mask.any():
        raise MetricsError(f"no samples in [{t_start}, {t_end}]")
    if cartesian is None:
        cart = np.column_stack([result.series("ee_err"), result.series("ee_speed")])
    else:
        cart = np.asarray(cartesian, dtype=float).reshape(result.data.shape[0], 2)
    joints = {}
    for i, label in enumerate(JOINT_LABELS):
        e = result.series(f"e{i}")[mask]
        u = result.series(f"u{i}")[mask]
        joints[label] = {
            "e_max": float(np.max(np.abs(e))),
            "e_rms": float(math.sqrt(np.mean(e * e))),
            "u_rms": float(math.sqrt(np.mean(u * u))),
        }
    err_max = float(np.max(cart[mask, 0]))
    speed_max = float(np.max(np.abs(cart[mask, 1])))
    if speed_max == 0.0:
        raise MetricsError("rho undefined: tool never moves in the window")
    est_max = {
        name[3:]: float(np.max(result.series(name)[mask]))
        for name in result.columns
        if name.startswith(("na_", "nb_"))
    }
    return {
        "schema": METRICS_SCHEMA,
        "scenario": result.scenario,
        "mode": result.mode,
        "seed": result.seed,
        "window": [float(t[mask][0]), float(t[mask][-1])],
        "aborted": result.aborted,
        "abort_reason": result.abort_reason,
        "abort_tick": result.abort_tick,
        "joints": joints,
        "tool_err_max": err_max,
        "tool_speed_max": speed_max,
        "rho": err_max / speed_max,
        "est_norm_max": est_max,
        "vpf_abs_max": float(np.max(np.abs(result.series("vpf")[mask]))),
    }


def write_metrics(report: dict, path: str | Path) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
