"""Hydraulic cylinder: plant dynamics and low-level control math.

Plant states per channel: piston position/velocity, two chamber pressures,
and a bristle deflection for the friction model. The valve model is the
signed-square-root orifice law with four flow coefficients; chamber
continuity gives the pressure dynamics. Everything the controller needs is
exposed in linear-in-parameter form (Y_f, Y_v, Y_d).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import constraint, rbfnn


class PlantError(RuntimeError):
    """Raised when plant integration produces non-finite state."""


def _sgn_sqrt(dp: float) -> float:
    """upsilon(dp) = sign(dp) sqrt(|dp|)."""
    return math.copysign(math.sqrt(abs(dp)), dp) if dp != 0.0 else 0.0


@dataclass(frozen=True)
class ActuatorParams:
    """Physical constants of one cylinder channel.

    theta_v is (c_p1, c_p2, c_n1, c_n2); friction_phi the 7-vector of the
    LuGre-style regressor below with shaping constants v_t, v_s, kappa_b.
    m_piston is the effective translating mass seen by the piston (piston,
    rod, and reflected mechanism inertia at the nominal configuration).
    """

    A_a: float
    A_b: float
    V_0a: float
    V_0b: float
    stroke: float
    beta: float
    c_l: float
    theta_v: np.ndarray
    p_s: float
    p_r: float
    friction_phi: np.ndarray
    v_t: float = 0.01
    v_s: float = 0.05
    kappa_b: float = 125.0
    m_piston: float = 100.0
    u_max: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "theta_v", np.asarray(self.theta_v, dtype=float).reshape(4))
        object.__setattr__(self, "friction_phi", np.asarray(self.friction_phi, dtype=float).reshape(7))
        for name in ("A_a", "A_b", "V_0a", "V_0b", "stroke", "beta", "m_piston"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (self.p_s > self.p_r > 0):
            raise ValueError("need p_s > p_r > 0")
        if (self.theta_v <= 0).any() or self.c_l < 0:
            raise ValueError("flow coefficients must be positive, leakage non-negative")
        object.__setattr__(self, "theta_v_tuple", tuple(map(float, self.theta_v)))
        object.__setattr__(self, "friction_phi_tuple", tuple(map(float, self.friction_phi)))

    @property
    def theta_d(self) -> np.ndarray:
        """True parameters of the force-rate model: (1/beta, A_a, A_b, c_l)."""
        return np.array([1.0 / self.beta, self.A_a, self.A_b, self.c_l])


@dataclass
class ActuatorState:
    """Chamber pressures, piston kinematics, and friction bristle state."""

    p_a: float
    p_b: float
    x: float
    xdot: float
    z: float = 0.0

    def copy(self) -> "ActuatorState":
        return ActuatorState(self.p_a, self.p_b, self.x, self.xdot, self.z)


def piston_force(state: ActuatorState, params: ActuatorParams) -> float:
    """f_p = A_a p_a - A_b p_b."""
    return params.A_a * state.p_a - params.A_b * state.p_b


def friction_regressor(
    xdot: float, z: float, params: ActuatorParams
) -> tuple[np.ndarray, float]:
    """Y_f (7,) and zdot for the bristle state.

    Terms: Coulomb tanh, Stribeck-shaped Coulomb, viscous, bristle z, bristle
    rate, and Stribeck-shaped bristle/viscous transition terms.
    """
    s = math.exp(-((xdot / params.v_s) ** 2))
    t = math.tanh(xdot / params.v_t)
    zdot = xdot - params.kappa_b * abs(xdot) * z
    Y = np.array([t, t * s, xdot, z, zdot, z * s, xdot * s])
    return Y, zdot


def friction_force(state: ActuatorState, phi_f: np.ndarray, params: ActuatorParams) -> float:
    """f_f = Y_f . phi_f at the state's velocity and bristle deflection."""
    Y, _ = friction_regressor(state.xdot, state.z, params)
    return float(Y @ np.asarray(phi_f, dtype=float))


def flow_rates(u: float, state: ActuatorState, params: ActuatorParams) -> tuple[float, float]:
    """Orifice flows (Q_a, Q_b) for valve signal u; S(u) branches at u = 0."""
    cp1, cp2, cn1, cn2 = params.theta_v
    if u > 0.0:
        Q_a = cp1 * _sgn_sqrt(params.p_s - state.p_a) * u
        Q_b = -cn2 * _sgn_sqrt(state.p_b - params.p_r) * u
    elif u < 0.0:
        Q_a = cn1 * _sgn_sqrt(state.p_a - params.p_r) * u
        Q_b = -cp2 * _sgn_sqrt(params.p_s - state.p_b) * u
    else:
        Q_a = Q_b = 0.0
    return Q_a, Q_b


def pressure_derivatives(
    state: ActuatorState, Q_a: float, Q_b: float, params: ActuatorParams
) -> tuple[float, float]:
    """Chamber continuity with laminar cross-port leakage Q_l = c_l (p_a - p_b)."""
    Q_l = params.c_l * (state.p_a - state.p_b)
    pdot_a = params.beta / (params.V_0a + params.A_a * state.x) * (Q_a - params.A_a * state.xdot - Q_l)
    pdot_b = params.beta / (params.V_0b + params.A_b * (params.stroke - state.x)) * (
        Q_b + params.A_b * state.xdot + Q_l
    )
    return pdot_a, pdot_b


def _chamber_lengths(state: ActuatorState, params: ActuatorParams) -> tuple[float, float]:
    # D_a = V_a / A_a, D_b = V_b / A_b: equivalent chamber column lengths
    D_a = params.V_0a / params.A_a + state.x
    D_b = params.V_0b / params.A_b + (params.stroke - state.x)
    return D_a, D_b


def valve_regressor(u: float, state: ActuatorState, params: ActuatorParams) -> np.ndarray:
    """Y_v (4,) with u_f = -Y_v . theta_v; columns follow (c_p1, c_p2, c_n1, c_n2)."""
    D_a, D_b = _chamber_lengths(state, params)
    su_pos = 1.0 if u > 0.0 else 0.0
    su_neg = 1.0 if u < 0.0 else 0.0
    return np.array(
        [
            -_sgn_sqrt(params.p_s - state.p_a) / D_a * su_pos * u,
            -_sgn_sqrt(params.p_s - state.p_b) / D_b * su_neg * u,
            -_sgn_sqrt(state.p_a - params.p_r) / D_a * su_neg * u,
            -_sgn_sqrt(state.p_b - params.p_r) / D_b * su_pos * u,
        ]
    )


def uf_from_valve(u: float, state: ActuatorState, theta_v: np.ndarray, params: ActuatorParams) -> float:
    """Flow-normalized command realized by valve signal u: u_f = -Y_v . theta_v."""
    return float(-valve_regressor(u, state, params) @ np.asarray(theta_v, dtype=float))


def pressure_regressor(fdot_pr: float, state: ActuatorState, params: ActuatorParams) -> np.ndarray:
    """Y_d (4,) with theta_d = (1/beta, A_a, A_b, c_l): u_f = Y_d . theta_d
    solves the force-rate balance for the required flow."""
    D_a, D_b = _chamber_lengths(state, params)
    return np.array(
        [
            fdot_pr,
            state.xdot / D_a,
            state.xdot / D_b,
            (state.p_a - state.p_b) * (1.0 / D_a + 1.0 / D_b),
        ]
    )


def force_rate(u: float, state: ActuatorState, params: ActuatorParams) -> float:
    """fdot_p implied by the flow balance (oracle for Y_d / theta_d identities)."""
    D_a, D_b = _chamber_lengths(state, params)
    u_f = uf_from_valve(u, state, params.theta_v, params)
    Q_l = params.c_l * (state.p_a - state.p_b)
    return params.beta * (
        u_f
        - state.xdot * (params.A_a / D_a + params.A_b / D_b)
        - Q_l * (1.0 / D_a + 1.0 / D_b)
    )


def required_uf(
    f_pr: float,
    fdot_pr: float,
    xdot_r: float,
    state: ActuatorState,
    theta_d_hat: np.ndarray,
    k_f: float,
    k_x: float,
    rbf_prediction: float,
    params: ActuatorParams,
) -> float:
    """u*_fr = Y_d theta_d_hat + k_f e_f + k_x e_x + (W_a^T Psi + eps_a)."""
    Y_d = pressure_regressor(fdot_pr, state, params)
    e_f = f_pr - piston_force(state, params)
    e_x = xdot_r - state.xdot
    return float(Y_d @ np.asarray(theta_d_hat, dtype=float)) + k_f * e_f + k_x * e_x + rbf_prediction


DEN_FLOOR = 1e-9


def uf_to_valve(
    u_fr: float, state: ActuatorState, theta_v_hat: np.ndarray, params: ActuatorParams
) -> tuple[float, bool]:
    """Invert the orifice law: voltage u realizing flow command u_fr.

    Returns (u, degraded); degraded is True when the branch denominator fell
    under the floor and the saturating fallback engaged.
    """
    th = np.asarray(theta_v_hat, dtype=float)
    D_a, D_b = _chamber_lengths(state, params)
    degraded = False
    if u_fr == 0.0:
        return 0.0, False
    if u_fr > 0.0:
        den = th[0] * _sgn_sqrt(params.p_s - state.p_a) / D_a + th[3] * _sgn_sqrt(
            state.p_b - params.p_r
        ) / D_b
    else:
        den = th[2] * _sgn_sqrt(state.p_a - params.p_r) / D_a + th[1] * _sgn_sqrt(
            params.p_s - state.p_b
        ) / D_b
    if den < DEN_FLOOR:
        den = DEN_FLOOR
        degraded = True
    u = u_fr / den
    if u > params.u_max:
        u = params.u_max
    elif u < -params.u_max:
        u = -params.u_max
    return u, degraded


def _derivs(
    x: float,
    xdot: float,
    p_a: float,
    p_b: float,
    z: float,
    u: float,
    f_load: float,
    p: ActuatorParams,
    theta_v: tuple,
    phi_f: tuple,
) -> tuple[float, float, float, float, float]:
    # plain-float hot path; mirrors flow_rates/pressure_derivatives/friction
    cp1, cp2, cn1, cn2 = theta_v
    if u > 0.0:
        Q_a = cp1 * _sgn_sqrt(p.p_s - p_a) * u
        Q_b = -cn2 * _sgn_sqrt(p_b - p.p_r) * u
    elif u < 0.0:
        Q_a = cn1 * _sgn_sqrt(p_a - p.p_r) * u
        Q_b = -cp2 * _sgn_sqrt(p.p_s - p_b) * u
    else:
        Q_a = Q_b = 0.0
    Q_l = p.c_l * (p_a - p_b)
    pdot_a = p.beta / (p.V_0a + p.A_a * x) * (Q_a - p.A_a * xdot - Q_l)
    pdot_b = p.beta / (p.V_0b + p.A_b * (p.stroke - x)) * (Q_b + p.A_b * xdot + Q_l)
    s = math.exp(-((xdot / p.v_s) ** 2))
    t = math.tanh(xdot / p.v_t)
    zdot = xdot - p.kappa_b * abs(xdot) * z
    f_f = (
        phi_f[0] * t
        + phi_f[1] * t * s
        + phi_f[2] * xdot
        + phi_f[3] * z
        + phi_f[4] * zdot
        + phi_f[5] * z * s
        + phi_f[6] * xdot * s
    )
    f_p = p.A_a * p_a - p.A_b * p_b
    xddot = (f_p - f_f - f_load) / p.m_piston
    return xdot, xddot, pdot_a, pdot_b, zdot


def plant_step(
    state: ActuatorState, u: float, f_load: float, params: ActuatorParams, dt: float
) -> ActuatorState:
    """One RK4 step; pressures clamp to [p_r, p_s], stroke to [0, s] with a
    zero-velocity stop. Raises PlantError on non-finite results."""
    theta_v = params.theta_v_tuple
    phi_f = params.friction_phi_tuple
    y = (state.x, state.xdot, state.p_a, state.p_b, state.z)
    k1 = _derivs(*y, u, f_load, params, theta_v, phi_f)
    y2 = tuple(a + 0.5 * dt * b for a, b in zip(y, k1))
    k2 = _derivs(*y2, u, f_load, params, theta_v, phi_f)
    y3 = tuple(a + 0.5 * dt * b for a, b in zip(y, k2))
    k3 = _derivs(*y3, u, f_load, params, theta_v, phi_f)
    y4 = tuple(a + dt * b for a, b in zip(y, k3))
    k4 = _derivs(*y4, u, f_load, params, theta_v, phi_f)
    out = [
        a + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)
    ]
    x, xdot, p_a, p_b, z = out
    if p_a < params.p_r:
        p_a = params.p_r
    elif p_a > params.p_s:
        p_a = params.p_s
    if p_b < params.p_r:
        p_b = params.p_r
    elif p_b > params.p_s:
        p_b = params.p_s
    if x < 0.0:
        x = 0.0
        if xdot < 0.0:
            xdot = 0.0
    elif x > params.stroke:
        x = params.stroke
        if xdot > 0.0:
            xdot = 0.0
    if not (
        math.isfinite(x)
        and math.isfinite(xdot)
        and math.isfinite(p_a)
        and math.isfinite(p_b)
        and math.isfinite(z)
    ):
        raise PlantError("non-finite actuator state")
    return ActuatorState(p_a, p_b, x, xdot, z)


@dataclass
class ActuatorGains:
    """Per-channel control and adaptation gains.

    gamma_f/gamma_v/gamma_d accept a scalar or a per-component vector; the
    regressor components differ by many orders of magnitude, so production
    configs scale each gain by the square of the nominal parameter. The
    optional theta_* boxes project the estimates onto a compact set after
    every update (None disables the projection).
    """

    k_f: float
    k_x: float
    gamma_f: float | np.ndarray = 1e3
    gamma_f0: float = 1e-3
    gamma_v: float | np.ndarray = 1e-18
    gamma_v0: float = 1e-3
    gamma_d: float | np.ndarray = 1e-14
    gamma_d0: float = 1e-3
    delta_db: float | np.ndarray = 1e-10
    delta_db0: float = 1e-3
    delta_a: float = 0.0
    delta_a0: float = 1e-3
    bar_delta_a: float = 0.0
    bar_delta_a0: float = 1e-3
    theta_f_max: np.ndarray | None = None
    theta_v_lo: np.ndarray | None = None
    theta_v_hi: np.ndarray | None = None
    theta_d_lo: np.ndarray | None = None
    theta_d_hi: np.ndarray | None = None
    theta_db_lo: np.ndarray | None = None
    theta_db_hi: np.ndarray | None = None

    def __post_init__(self):
        if self.delta_a == 0.0:
            self.delta_a = 1.5 * self.k_x * self.k_f
        if self.bar_delta_a == 0.0:
            self.bar_delta_a = 0.5 * self.k_x * self.k_f
        self.gamma_f = np.broadcast_to(np.asarray(self.gamma_f, dtype=float), (7,)).copy()
        self.gamma_v = np.broadcast_to(np.asarray(self.gamma_v, dtype=float), (4,)).copy()
        self.gamma_d = np.broadcast_to(np.asarray(self.gamma_d, dtype=float), (4,)).copy()
        self.delta_db = np.broadcast_to(np.asarray(self.delta_db, dtype=float), (5,)).copy()
        for name, n in (("theta_f_max", 7), ("theta_v_lo", 4), ("theta_v_hi", 4),
                        ("theta_d_lo", 4), ("theta_d_hi", 4),
                        ("theta_db_lo", 5), ("theta_db_hi", 5)):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.asarray(v, dtype=float).reshape(n))


@dataclass
class ActuatorEstimates:
    """All adapted quantities of one channel.

    theta_f_hat: friction (7,), theta_v_hat: valve coefficients (4,),
    theta_d_hat: force-rate parameters (4,), db: inverse-compensator state,
    net: RBF estimator over chi_a with scalar output.
    """

    theta_f_hat: np.ndarray
    theta_v_hat: np.ndarray
    theta_d_hat: np.ndarray
    db: constraint.DbInverseState
    net: rbfnn.RbfNetwork

    def __post_init__(self):
        self.theta_f_hat = np.asarray(self.theta_f_hat, dtype=float).reshape(7)
        self.theta_v_hat = np.asarray(self.theta_v_hat, dtype=float).reshape(4)
        self.theta_d_hat = np.asarray(self.theta_d_hat, dtype=float).reshape(4)

    def flat(self) -> np.ndarray:
        """Concatenated view for boundedness telemetry."""
        return np.concatenate(
            [
                self.theta_f_hat,
                self.theta_v_hat,
                self.theta_d_hat,
                self.db.theta_hat,
                [self.db.w_bar_hat],
                self.net.weights.ravel(),
                self.net.bias,
            ]
        )


THETA_V_FLOOR = 1e-12


def adapt_theta_steps(
    theta_f_hat: np.ndarray,
    theta_v_hat: np.ndarray,
    theta_d_hat: np.ndarray,
    e_f: float,
    e_x: float,
    Y_f: np.ndarray,
    Y_v: np.ndarray,
    Y_d: np.ndarray,
    g: ActuatorGains,
    dt: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sigma-modified Euler updates of the three linear parameter estimates.

    theta_f is driven by the velocity error, theta_v and theta_d by the force
    error; every law carries the printed 1/k_x scaling and a leakage term.
    theta_v is floored so valve inversion stays defined, and estimates are
    projected onto the gain boxes when those are set.
    """
    inv_kx = 1.0 / g.k_x
    theta_f = theta_f_hat + dt * g.gamma_f * (inv_kx * Y_f * e_x - g.gamma_f0 * theta_f_hat)
    theta_v = theta_v_hat + dt * g.gamma_v * (inv_kx * Y_v * e_f - g.gamma_v0 * theta_v_hat)
    np.maximum(theta_v, THETA_V_FLOOR, out=theta_v)
    theta_d = theta_d_hat + dt * g.gamma_d * (inv_kx * Y_d * e_f - g.gamma_d0 * theta_d_hat)
    if g.theta_f_max is not None:
        np.clip(theta_f, -g.theta_f_max, g.theta_f_max, out=theta_f)
    if g.theta_v_lo is not None:
        np.clip(theta_v, g.theta_v_lo, g.theta_v_hi, out=theta_v)
    if g.theta_d_lo is not None:
        np.clip(theta_d, g.theta_d_lo, g.theta_d_hi, out=theta_d)
    return theta_f, theta_v, theta_d


def adapt_actuator_step(
    est: ActuatorEstimates,
    state: ActuatorState,
    e_f: float,
    e_x: float,
    u_star: float,
    udot_star: float,
    v_out: float,
    u_applied: float,
    fdot_pr: float,
    chi_a: np.ndarray,
    g: ActuatorGains,
    params: ActuatorParams,
    dt: float,
    ctrl_z: float,
) -> None:
    """Advance every estimate of one channel in place by dt.

    u_star/udot_star/v_out shape the compensator regressor (v_out is the
    inverse output already sent this tick); u_applied selects the active
    valve branch for Y_v; ctrl_z is the controller's own bristle state.
    """
    Y_f, _ = friction_regressor(state.xdot, ctrl_z, params)
    Y_v = valve_regressor(u_applied, state, params)
    Y_d = pressure_regressor(fdot_pr, state, params)
    est.theta_f_hat, est.theta_v_hat, est.theta_d_hat = adapt_theta_steps(
        est.theta_f_hat, est.theta_v_hat, est.theta_d_hat, e_f, e_x, Y_f, Y_v, Y_d, g, dt
    )
    eta = constraint.db_error_regressor(v_out, udot_star, u_star, est.db)
    est.db.theta_hat = constraint.adapt_db_step(
        est.db.theta_hat, eta, e_f, g.delta_db, g.delta_db0, g.k_x, dt
    )
    rbfnn.adapt_actuator_step(
        est.net, chi_a, e_f, g.delta_a, g.delta_a0, g.bar_delta_a, g.bar_delta_a0, g.k_x, dt
    )
