"""Compound deadzone-backlash nonlinearity and its smooth adaptive inverse.

The plant applies deadzone-then-backlash to the valve voltage. The inverse
runs at the flow-command level: a slope correction 1/c_hat plus a smoothly
blended offset w that jumps the dead band and the play, with the blend
weights phi(kappa) switching on the signs of the command and its rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

C_FLOOR = 1e-6
_HOLD_BAND = 1e-12


@dataclass(frozen=True)
class DbParams:
    """Deadzone slope/thresholds (m_d, b_r, b_l) and backlash slope/play (k_b, B_r, B_l).

    Zero thresholds are allowed (degenerate branches collapse); slopes must be
    positive. b_l and B_l are the left parameters, <= 0.
    """

    m_d: float = 1.0
    b_r: float = 0.0
    b_l: float = 0.0
    k_b: float = 1.0
    B_r: float = 0.0
    B_l: float = 0.0

    def __post_init__(self):
        if self.m_d <= 0 or self.k_b <= 0:
            raise ValueError("slopes m_d, k_b must be positive")
        if self.b_r < 0 or self.B_r < 0 or self.b_l > 0 or self.B_l > 0:
            raise ValueError("right thresholds must be >= 0, left <= 0")

    # compound-form constants
    @property
    def c(self) -> float:
        return self.m_d * self.k_b

    @property
    def d_r(self) -> float:
        return self.k_b * self.B_r

    @property
    def d_l(self) -> float:
        return self.k_b * self.B_l


@dataclass(frozen=True)
class DbState:
    """Hysteresis memory: last deadzone output and last backlash output."""

    v1_prev: float = 0.0
    u_prev: float = 0.0


def deadzone(v_star: float, params: DbParams) -> float:
    if v_star >= params.b_r:
        return params.m_d * (v_star - params.b_r)
    if v_star <= params.b_l:
        return params.m_d * (v_star - params.b_l)
    return 0.0


def backlash_step(v1: float, state: DbState, params: DbParams) -> tuple[float, DbState]:
    """Sampled backlash: rising edge tracks k_b (v1 - B_r) once engaged,
    falling edge tracks k_b (v1 - B_l), otherwise the output holds."""
    dv = v1 - state.v1_prev
    if dv > _HOLD_BAND:
        u = max(state.u_prev, params.k_b * (v1 - params.B_r))
    elif dv < -_HOLD_BAND:
        u = min(state.u_prev, params.k_b * (v1 - params.B_l))
    else:
        u = state.u_prev
    return u, DbState(v1, u)


def compound_db(v_star: float, state: DbState, params: DbParams) -> tuple[float, DbState]:
    """Deadzone followed by backlash."""
    return backlash_step(deadzone(v_star, params), state, params)


def phi_smooth(kappa: float, kappa0: float, x0: float) -> float:
    """Blend weight (tanh((kappa - kappa0)/x0) + 1)/2: 0 far left, 1 far right."""
    return 0.5 * (math.tanh((kappa - kappa0) / x0) + 1.0)


@dataclass
class DbInverseState:
    """Adaptive inverse state.

    theta_hat = (c, c b_r, c b_l, d_r, d_l) estimates; w_bar_hat the
    low-passed offset; alpha its rate; kappa0/x0 the phi blend constants.
    """

    theta_hat: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0, 0.0]))
    w_bar_hat: float = 0.0
    alpha: float = 50.0
    kappa0: float = 0.0
    x0: float = 0.01

    def __post_init__(self):
        self.theta_hat = np.asarray(self.theta_hat, dtype=float).reshape(5).copy()
        if self.theta_hat[0] < C_FLOOR:
            self.theta_hat[0] = C_FLOOR

    @property
    def c_hat(self) -> float:
        return max(float(self.theta_hat[0]), C_FLOOR)

    @property
    def b_r_hat(self) -> float:
        return float(self.theta_hat[1]) / self.c_hat

    @property
    def b_l_hat(self) -> float:
        return float(self.theta_hat[2]) / self.c_hat

    @property
    def d_r_hat(self) -> float:
        return float(self.theta_hat[3])

    @property
    def d_l_hat(self) -> float:
        return float(self.theta_hat[4])


def smooth_offset(u_d_star: float, udot_d_star: float, inv: DbInverseState) -> float:
    """Instantaneous (unfiltered) inverse offset w_hat."""
    pr = phi_smooth(u_d_star, inv.kappa0, inv.x0)
    pl = phi_smooth(-u_d_star, inv.kappa0, inv.x0)
    qr = phi_smooth(udot_d_star, inv.kappa0, inv.x0)
    ql = phi_smooth(-udot_d_star, inv.kappa0, inv.x0)
    return (qr * inv.d_r_hat + ql * inv.d_l_hat) / inv.c_hat + pr * inv.b_r_hat + pl * inv.b_l_hat


def adaptive_inverse(
    u_d_star: float, udot_d_star: float, inv: DbInverseState, dt: float
) -> float:
    """v* = u*_d / c_hat + w_bar_hat, with w_bar_hat chasing smooth_offset.

    Advances w_bar_hat in place before forming the output.
    """
    w = smooth_offset(u_d_star, udot_d_star, inv)
    inv.w_bar_hat += dt * inv.alpha * (w - inv.w_bar_hat)
    return u_d_star / inv.c_hat + inv.w_bar_hat


def db_error_regressor(
    v: float, udot_d_star: float, u_d_star: float, inv: DbInverseState
) -> np.ndarray:
    """eta such that u*_d == -theta_hat . eta when v is the unfiltered inverse
    output (w_bar_hat == smooth_offset); the lag of w_bar_hat is part of the
    bound-mismatch term the bias estimator absorbs."""
    return np.array(
        [
            -v,
            phi_smooth(u_d_star, inv.kappa0, inv.x0),
            phi_smooth(-u_d_star, inv.kappa0, inv.x0),
            phi_smooth(udot_d_star, inv.kappa0, inv.x0),
            phi_smooth(-udot_d_star, inv.kappa0, inv.x0),
        ]
    )


def adapt_db_step(
    theta_hat: np.ndarray,
    eta: np.ndarray,
    force_error: float,
    delta: float,
    delta0: float,
    k_x: float,
    dt: float,
) -> np.ndarray:
    """Sigma-modified update driven by the scaled force error; floors c_hat."""
    theta = theta_hat + dt * delta * ((force_error / k_x) * eta - delta0 * theta_hat)
    if theta[0] < C_FLOOR:
        theta[0] = C_FLOOR
    return theta
