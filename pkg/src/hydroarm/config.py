"""YAML configuration: rig fixtures, gain sets, and scenario files.

A rig file describes one machine (geometry, bodies, actuators); a scenario
file references a rig, picks a controller mode and reference, and may
override actuator constraint parameters or gains. Bundled files live in
hydroarm/data and are addressable by bare name.
"""

from __future__ import annotations

import importlib.resources
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import manipulator as mp
from .actuator import ActuatorGains, ActuatorParams
from .constraint import DbInverseState, DbParams
from .rigidbody import InertialParams

RIG_SCHEMA = "hydroarm-rig 1"
SCENARIO_SCHEMA = "hydroarm-scenario 1"

ACTUATOR_ORDER = ("pillar", "chain1", "chain2", "wrist1", "wrist2", "wrist3")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration file."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = str(path)


def _require(data: dict, key: str, path) -> object:
    if key not in data:
        raise ConfigError(path, f"missing required key '{key}'")
    return data[key]


@dataclass(frozen=True)
class RigidGains:
    """Body-level control and adaptation gains."""

    K_A: float = 50.0
    gamma: float = 500.0
    gamma0: float = 1e-3
    Gamma: float = 350.0
    tau0: float = 1e-3
    pi_gain: float = 20.0
    pi0: float = 1e-3

    def __post_init__(self):
        for name in ("K_A", "gamma", "gamma0", "Gamma", "tau0", "pi_gain", "pi0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class NetworkSettings:
    """RBF network sizing; actuator node counts follow ACTUATOR_ORDER.

    The chi scales normalize network inputs to roughly [-1, 1] before the
    Gaussian activations: body inputs are the stacked (V, V_r, Vdot_r)
    blocks, actuator inputs (x, xdot, p_a, p_b, e_f).
    """

    body_nodes: int = 15
    body_width: float = 5.0
    actuator_nodes: tuple[int, ...] = (13, 13, 13, 12, 12, 12)
    actuator_width: float = 0.5
    body_chi_scale: tuple[float, float] = (2.0, 20.0)
    actuator_chi_scale: tuple[float, float, float, float, float] = (
        0.5, 0.5, 2.0e7, 2.0e7, 1.0e4)


@dataclass(frozen=True)
class ActuatorSetup:
    """Everything one joint's hydraulic layer needs."""

    name: str
    params: ActuatorParams
    gains: ActuatorGains
    plant_db: DbParams
    inverse_alpha: float = 50.0
    inverse_x0: float = 0.01
    inverse_kappa0: float = 0.0
    inverse_theta0: tuple[float, ...] | None = None
    nn_nodes: int = 12


@dataclass(frozen=True)
class RigConfig:
    name: str
    model: mp.MachineModel
    actuators: dict[str, ActuatorSetup]

    def actuator_list(self) -> list[ActuatorSetup]:
        return [self.actuators[n] for n in ACTUATOR_ORDER if n in self.actuators]


@dataclass
class Scenario:
    name: str
    rig: RigConfig
    mode: str
    duration: float
    dt_control: float
    dt_plant: float
    seed: int
    initial: mp.JointState
    reference: dict
    f_env: np.ndarray
    motion: mp.MotionGains
    rigid: RigidGains
    networks: NetworkSettings
    phi_init_scale: float = 0.2
    theta_init_scale: float = 0.5

    def __post_init__(self):
        if self.mode not in ("pd", "vdc", "rvdc"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.duration <= 0 or self.dt_control <= 0 or self.dt_plant <= 0:
            raise ValueError("durations and steps must be positive")
        n_sub = self.dt_control / self.dt_plant
        if abs(n_sub - round(n_sub)) > 1e-9:
            raise ValueError("dt_control must be an integer multiple of dt_plant")
        self.f_env = np.asarray(self.f_env, dtype=float).reshape(6)

    @property
    def plant_substeps(self) -> int:
        return int(round(self.dt_control / self.dt_plant))


def _data_path(name: str) -> Path:
    return Path(str(importlib.resources.files("hydroarm").joinpath("data", name)))


def resolve_config_path(ref: str | Path, base: Path | None = None) -> Path:
    """Resolve a config reference: explicit path, path relative to the
    referencing file, or bundled data file name."""
    p = Path(ref)
    if p.is_file():
        return p
    if base is not None and (base / p).is_file():
        return base / p
    for candidate in (p.name, f"{p.name}.yaml"):
        bundled = _data_path(candidate)
        if bundled.is_file():
            return bundled
    raise ConfigError(ref, "configuration file not found")


def _load_yaml(path: Path) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(path, f"YAML parse error: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(path, "top level must be a mapping")
    return data


def _parse_mount(data: dict | None, path) -> mp.Mount:
    if data is None:
        return mp.Mount.identity()
    angle = float(data.get("angle", 0.0))
    offset = data.get("offset", (0.0, 0.0, 0.0))
    return mp.Mount.z_rotation(angle, tuple(float(v) for v in offset))


def _parse_body(name: str, data: dict, path) -> InertialParams:
    mass = float(_require(data, "mass", path))
    com = np.asarray(_require(data, "com", path), dtype=float).reshape(3)
    raw = np.asarray(_require(data, "inertia_com", path), dtype=float).ravel()
    if raw.size == 3:
        I_com = np.diag(raw)
    elif raw.size == 6:
        I_com = np.array([
            [raw[0], raw[3], raw[5]],
            [raw[3], raw[1], raw[4]],
            [raw[5], raw[4], raw[2]],
        ])
    else:
        raise ConfigError(path, f"body {name}: inertia_com needs 3 or 6 entries")
    I_o = I_com + mass * ((com @ com) * np.eye(3) - np.outer(com, com))
    inertia6 = np.array([
        I_o[0, 0], I_o[1, 1], I_o[2, 2], I_o[0, 1], I_o[1, 2], I_o[0, 2]
    ])
    try:
        return InertialParams(mass, mass * com, inertia6)
    except ValueError as exc:
        raise ConfigError(path, f"body {name}: {exc}") from exc


def _parse_chain(data: dict | None, path) -> mp.ChainGeometry | None:
    if data is None:
        return None
    try:
        return mp.ChainGeometry(
            L_j=float(_require(data, "L_j", path)),
            L_j1=float(_require(data, "L_j1", path)),
            x_j0=float(_require(data, "x_j0", path)),
            l_cj=float(_require(data, "l_cj", path)),
            angle_offset=float(_require(data, "angle_offset", path)),
            q_sign=float(_require(data, "q_sign", path)),
            fy_term_positive=bool(data.get("fy_term_positive", False)),
        )
    except ValueError as exc:
        raise ConfigError(path, f"chain: {exc}") from exc


def _parse_db(data: dict | None, path) -> DbParams:
    if data is None:
        return DbParams()
    try:
        return DbParams(
            m_d=float(data.get("m_d", 1.0)),
            b_r=float(data.get("b_r", 0.0)),
            b_l=float(data.get("b_l", 0.0)),
            k_b=float(data.get("k_b", 1.0)),
            B_r=float(data.get("B_r", 0.0)),
            B_l=float(data.get("B_l", 0.0)),
        )
    except ValueError as exc:
        raise ConfigError(path, f"deadzone/backlash: {exc}") from exc


def _gain_value(v):
    if isinstance(v, (list, tuple)):
        return np.asarray(v, dtype=float)
    return float(v)


def _parse_actuator(name: str, data: dict, path) -> ActuatorSetup:
    p = _require(data, "params", path)
    try:
        params = ActuatorParams(
            A_a=float(_require(p, "A_a", path)),
            A_b=float(_require(p, "A_b", path)),
            V_0a=float(_require(p, "V_0a", path)),
            V_0b=float(_require(p, "V_0b", path)),
            stroke=float(_require(p, "stroke", path)),
            beta=float(_require(p, "beta", path)),
            c_l=float(_require(p, "c_l", path)),
            theta_v=np.asarray(_require(p, "theta_v", path), dtype=float),
            p_s=float(_require(p, "p_s", path)),
            p_r=float(_require(p, "p_r", path)),
            friction_phi=np.asarray(_require(p, "friction", path), dtype=float),
            v_t=float(p.get("v_t", 0.01)),
            v_s=float(p.get("v_s", 0.05)),
            kappa_b=float(p.get("kappa_b", 125.0)),
            m_piston=float(_require(p, "m_piston", path)),
            u_max=float(p.get("u_max", 10.0)),
        )
    except ValueError as exc:
        raise ConfigError(path, f"actuator {name}: {exc}") from exc
    g = data.get("gains", {})
    k_f = float(_require(g, "k_f", path))
    k_x = float(_require(g, "k_x", path))
    # full-valve flow, the natural scale for everything downstream of the
    # flow command
    uf_full = params.u_max * float(params.theta_v[0]) * math.sqrt(params.p_s - params.p_r)
    # scale the per-component adaptation gains by the squared nominal
    # parameters and box the estimates; the regressor components differ by
    # orders of magnitude, so a scalar gain would slew the small components
    # through their physical range in a tick
    defaults = {
        "gamma_f": 1e-4 * params.friction_phi**2,
        "gamma_v": 4e-4 * params.theta_v**2,
        "gamma_d": 3e-3 * params.theta_d**2,
        "delta_db": k_x * k_f * np.array([1e4, 0.02, 0.02, 0.02, 0.02]),
        "theta_f_max": 20.0 * params.friction_phi,
        "theta_v_lo": 0.02 * params.theta_v,
        "theta_v_hi": 20.0 * params.theta_v,
        "theta_d_lo": 0.02 * params.theta_d,
        "theta_d_hi": 20.0 * params.theta_d,
        "theta_db_lo": np.array([0.2] + [-0.1 * uf_full] * 4),
        "theta_db_hi": np.array([5.0] + [0.1 * uf_full] * 4),
    }
    defaults.update({
        key: _gain_value(g[key])
        for key in (
            "gamma_f", "gamma_f0", "gamma_v", "gamma_v0",
            "gamma_d", "gamma_d0", "delta_db", "delta_db0",
            "delta_a", "delta_a0", "bar_delta_a", "bar_delta_a0",
        )
        if key in g
    })
    try:
        gains = ActuatorGains(k_f=k_f, k_x=k_x, **defaults)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, f"actuator {name} gains: {exc}") from exc
    inverse = data.get("inverse", {})
    return ActuatorSetup(
        name=name,
        params=params,
        gains=gains,
        plant_db=_parse_db(data.get("constraint"), path),
        inverse_alpha=float(inverse.get("alpha", 50.0)),
        # blend width lives on the flow command, so the default follows its
        # scale rather than the valve-voltage scale
        inverse_x0=float(inverse.get("x0", 0.001 * uf_full)),
        inverse_kappa0=float(inverse.get("kappa0", 0.0)),
        inverse_theta0=_parse_inverse_theta0(inverse.get("theta0"), name, path),
        nn_nodes=int(data.get("nn_nodes", 12)),
    )


def _parse_inverse_theta0(data, name, path) -> tuple[float, ...] | None:
    if data is None:
        return None
    arr = np.asarray(data, dtype=float)
    if arr.shape != (5,):
        raise ConfigError(path, f"actuator {name} inverse theta0 needs 5 entries")
    if arr[0] <= 0.0:
        raise ConfigError(path, f"actuator {name} inverse theta0 slope must be positive")
    return tuple(float(v) for v in arr)


def _parse_limits(data, path) -> np.ndarray | None:
    if data is None:
        return None
    arr = np.asarray(data, dtype=float)
    if arr.shape != (3, 2):
        raise ConfigError(path, "limits need shape 3x2")
    if np.any(arr[:, 0] >= arr[:, 1]):
        raise ConfigError(path, "limit lower bounds must be below upper bounds")
    return arr


def load_rig(ref: str | Path, base: Path | None = None) -> RigConfig:
    path = resolve_config_path(ref, base)
    data = _load_yaml(path)
    if data.get("schema") != RIG_SCHEMA:
        raise ConfigError(path, f"expected schema '{RIG_SCHEMA}'")
    name = str(data.get("name", path.stem))
    bodies_raw = _require(data, "bodies", path)
    bodies = {n: _parse_body(n, b, path) for n, b in bodies_raw.items()}
    ratios_raw = _require(data, "ratios", path)
    try:
        ratios = mp.GearRatios(
            r_p=float(_require(ratios_raw, "r_p", path)),
            r_w=tuple(float(v) for v in _require(ratios_raw, "r_w", path)),
        )
        model = mp.MachineModel(
            gravity=np.asarray(_require(data, "gravity", path), dtype=float),
            ratios=ratios,
            bodies=bodies,
            pillar_mount=_parse_mount(data.get("pillar_mount"), path),
            rack_mount=_parse_mount(data.get("rack_mount"), path),
            chain1=_parse_chain(data.get("chain1"), path),
            chain2=_parse_chain(data.get("chain2"), path),
            chain2_mount=_parse_mount(data.get("chain2_mount"), path)
            if data.get("chain2") is not None else None,
            wrist_mount=_parse_mount(data.get("wrist_mount"), path)
            if data.get("wrist") is not None else None,
            wrist_links=tuple(
                float(v) for v in data.get("wrist", {}).get("links", (0.0, 0.0, 0.0))
            ),
            zeta_limits=_parse_limits(data.get("zeta_limits"), path),
            xi_limits=_parse_limits(data.get("xi_limits"), path),
        )
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc
    actuators_raw = _require(data, "actuators", path)
    actuators = {}
    for act_name, act_data in actuators_raw.items():
        if act_name not in ACTUATOR_ORDER:
            raise ConfigError(path, f"unknown actuator '{act_name}'")
        actuators[act_name] = _parse_actuator(act_name, act_data, path)
    expected = ["pillar"]
    if model.chain1 is not None:
        expected.append("chain1")
    if model.chain2 is not None:
        expected.append("chain2")
    if model.has_wrist:
        expected.extend(["wrist1", "wrist2", "wrist3"])
    missing = [n for n in expected if n not in actuators]
    if missing:
        raise ConfigError(path, f"actuators missing for: {', '.join(missing)}")
    return RigConfig(name=name, model=model, actuators=actuators)


def _merge_actuator_overrides(rig: RigConfig, overrides: dict, path) -> RigConfig:
    actuators = dict(rig.actuators)
    for name, patch in overrides.items():
        if name not in actuators:
            raise ConfigError(path, f"override for unknown actuator '{name}'")
        base = actuators[name]
        plant_db = base.plant_db
        if "constraint" in patch:
            plant_db = _parse_db(patch["constraint"], path)
        gains = base.gains
        if "gains" in patch:
            g = patch["gains"]
            kwargs = {
                "k_f": float(g.get("k_f", base.gains.k_f)),
                "k_x": float(g.get("k_x", base.gains.k_x)),
            }
            for key in (
                "gamma_f", "gamma_f0", "gamma_v", "gamma_v0", "gamma_d",
                "gamma_d0", "delta_db", "delta_db0", "delta_a", "delta_a0",
                "bar_delta_a", "bar_delta_a0",
            ):
                kwargs[key] = _gain_value(g[key]) if key in g else getattr(base.gains, key)
            for key in (
                "theta_f_max", "theta_v_lo", "theta_v_hi",
                "theta_d_lo", "theta_d_hi", "theta_db_lo", "theta_db_hi",
            ):
                kwargs[key] = getattr(base.gains, key)
            gains = ActuatorGains(**kwargs)
        inverse = patch.get("inverse", {})
        actuators[name] = ActuatorSetup(
            name=name,
            params=base.params,
            gains=gains,
            plant_db=plant_db,
            inverse_alpha=float(inverse.get("alpha", base.inverse_alpha)),
            inverse_x0=float(inverse.get("x0", base.inverse_x0)),
            inverse_kappa0=float(inverse.get("kappa0", base.inverse_kappa0)),
            inverse_theta0=(
                _parse_inverse_theta0(inverse["theta0"], name, rig.name)
                if "theta0" in inverse else base.inverse_theta0
            ),
            nn_nodes=int(patch.get("nn_nodes", base.nn_nodes)),
        )
    return RigConfig(name=rig.name, model=rig.model, actuators=actuators)


def load_scenario(ref: str | Path) -> Scenario:
    path = resolve_config_path(ref)
    data = _load_yaml(path)
    if data.get("schema") != SCENARIO_SCHEMA:
        raise ConfigError(path, f"expected schema '{SCENARIO_SCHEMA}'")
    rig = load_rig(_require(data, "rig", path), base=path.parent)
    overrides = data.get("overrides", {})
    if "actuators" in overrides:
        rig = _merge_actuator_overrides(rig, overrides["actuators"], path)
    init = data.get("initial", {})
    initial = mp.JointState(
        np.asarray(init.get("zeta", (0.0, 0.0, 0.0)), dtype=float),
        np.asarray(init.get("xi", (0.0, 0.0, 0.0)), dtype=float),
        np.zeros(6),
    )
    motion_raw = data.get("motion_gains", {})
    motion = mp.MotionGains(
        lam=float(motion_raw.get("lam", 3.0)),
        lam_x=tuple(float(v) for v in motion_raw.get("lam_x", (5.0, 5.0))),
        sigma=tuple(float(v) for v in motion_raw.get("sigma", (12.0, 12.0, 18.0))),
    )
    rigid_raw = data.get("rigid_gains", {})
    try:
        rigid = RigidGains(**{k: float(v) for k, v in rigid_raw.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, f"rigid_gains: {exc}") from exc
    nets_raw = data.get("networks", {})
    networks = NetworkSettings(
        body_nodes=int(nets_raw.get("body_nodes", 15)),
        body_width=float(nets_raw.get("body_width", 5.0)),
        actuator_nodes=tuple(
            int(v) for v in nets_raw.get("actuator_nodes", (13, 13, 13, 12, 12, 12))
        ),
        actuator_width=float(nets_raw.get("actuator_width", 0.5)),
    )
    reference = _require(data, "reference", path)
    if reference.get("type") not in ("joint_waypoints", "cartesian_setpoints", "hold"):
        raise ConfigError(path, f"unknown reference type {reference.get('type')!r}")
    try:
        return Scenario(
            name=str(data.get("name", path.stem)),
            rig=rig,
            mode=str(data.get("mode", "rvdc")).lower(),
            duration=float(_require(data, "duration", path)),
            dt_control=float(data.get("dt_control", 1e-3)),
            dt_plant=float(data.get("dt_plant", 2e-4)),
            seed=int(data.get("seed", 0)),
            initial=initial,
            reference=reference,
            f_env=np.asarray(data.get("f_env", np.zeros(6)), dtype=float),
            motion=motion,
            rigid=rigid,
            networks=networks,
            phi_init_scale=float(data.get("phi_init_scale", 0.2)),
            theta_init_scale=float(data.get("theta_init_scale", 0.5)),
        )
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


def make_inverse_state(setup: ActuatorSetup, theta_hat=None, w_bar0=0.0) -> DbInverseState:
    """Fresh deadzone-backlash inverse state for one actuator."""
    inv = DbInverseState(
        alpha=setup.inverse_alpha,
        kappa0=setup.inverse_kappa0,
        x0=setup.inverse_x0,
    )
    if theta_hat is None:
        theta_hat = setup.inverse_theta0
    if theta_hat is not None:
        inv.theta_hat = np.asarray(theta_hat, dtype=float).reshape(5).copy()
    inv.w_bar_hat = float(w_bar0)
    return inv
