"""Per-body dynamics in body-fixed coordinates.

The ten inertial parameters phi = (m, h, Ixx, Iyy, Izz, Ixy, Iyz, Ixz) enter
the Newton-Euler wrench linearly; `regressor` is the closed form of that
factorization and `net_wrench` evaluates the same wrench through explicit
M, C, G matrices so the two routes stay independently checkable.

Adaptation evolves the 4x4 pseudo-inertia image of phi on the SPD cone,
driven by the S matrix built from s = Y^T (V_r - V).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spatial import cross3, skew

_SPD_FLOOR = 1e-9


def _inertia_matrix(inertia6: np.ndarray) -> np.ndarray:
    ixx, iyy, izz, ixy, iyz, ixz = inertia6
    return np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])


def _inertia6(I: np.ndarray) -> np.ndarray:
    return np.array([I[0, 0], I[1, 1], I[2, 2], I[0, 1], I[1, 2], I[0, 2]])


@dataclass(frozen=True)
class InertialParams:
    """The unique 10-parameter description of one rigid body.

    Parameters
    ----------
    mass : float
        Body mass, kg.
    first_moment : array (3,)
        h = m * com, kg m, in the body frame.
    inertia6 : array (6,)
        Rotational inertia about the body frame origin,
        ordered (Ixx, Iyy, Izz, Ixy, Iyz, Ixz), kg m^2.
    """

    mass: float
    first_moment: np.ndarray
    inertia6: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "first_moment", np.asarray(self.first_moment, dtype=float).reshape(3))
        object.__setattr__(self, "inertia6", np.asarray(self.inertia6, dtype=float).reshape(6))
        if not self.mass > 0.0:
            raise ValueError("mass must be positive")
        L = _pseudo_inertia_matrix(self.phi)
        if np.linalg.eigvalsh(L).min() <= 0.0:
            raise ValueError("physically inconsistent parameters: pseudo-inertia not SPD")

    @property
    def phi(self) -> np.ndarray:
        return np.concatenate([[self.mass], self.first_moment, self.inertia6])

    @property
    def com(self) -> np.ndarray:
        return self.first_moment / self.mass

    @property
    def inertia_matrix(self) -> np.ndarray:
        return _inertia_matrix(self.inertia6)


@dataclass(frozen=True)
class PseudoInertia:
    """4x4 SPD image of the inertial parameters under the Lemma-2 style map."""

    matrix: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float).reshape(4, 4)
        if np.abs(M - M.T).max() > 1e-12:
            raise ValueError("pseudo-inertia must be symmetric")
        M = 0.5 * (M + M.T)
        try:
            np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            raise ValueError("pseudo-inertia must be positive definite") from None
        object.__setattr__(self, "matrix", M)


def _pseudo_inertia_matrix(phi: np.ndarray) -> np.ndarray:
    m, h, I = phi[0], phi[1:4], _inertia_matrix(phi[4:])
    L = np.empty((4, 4))
    L[:3, :3] = 0.5 * np.trace(I) * np.eye(3) - I
    L[:3, 3] = h
    L[3, :3] = h
    L[3, 3] = m
    return L


def phi_to_L(phi: InertialParams) -> PseudoInertia:
    """L = [[0.5 tr(I) 1 - I, h], [h^T, m]]."""
    return PseudoInertia(_pseudo_inertia_matrix(phi.phi))


def L_to_phi(L: PseudoInertia) -> InertialParams:
    """Exact inverse of phi_to_L: I = tr(Sigma) 1 - Sigma with Sigma the top block."""
    M = L.matrix
    sigma = M[:3, :3]
    I = np.trace(sigma) * np.eye(3) - sigma
    return InertialParams(float(M[3, 3]), M[:3, 3].copy(), _inertia6(I))


def phi_vector_from_L(M: np.ndarray) -> np.ndarray:
    """Raw 10-vector from a raw 4x4 (no SPD validation; adaptation hot path)."""
    sigma = M[:3, :3]
    I = np.trace(sigma) * np.eye(3) - sigma
    return np.concatenate([[M[3, 3]], M[:3, 3], _inertia6(I)])


def mass_matrix(phi: InertialParams) -> np.ndarray:
    """M_A = [[m 1, -skew(h)], [skew(h), I]]."""
    Sh = skew(phi.first_moment)
    M = np.zeros((6, 6))
    M[:3, :3] = phi.mass * np.eye(3)
    M[:3, 3:] = -Sh
    M[3:, :3] = Sh
    M[3:, 3:] = phi.inertia_matrix
    return M


def coriolis_matrix(phi: InertialParams, v6: np.ndarray) -> np.ndarray:
    """C_A(omega) such that C_A @ V collects the velocity-product terms."""
    v6 = np.asarray(v6, dtype=float)
    v, w = v6[:3], v6[3:]
    Sw, Sh = skew(w), skew(phi.first_moment)
    C = np.zeros((6, 6))
    C[:3, :3] = phi.mass * Sw
    C[:3, 3:] = -Sw @ Sh
    C[3:, :3] = Sw @ Sh + skew(Sh @ w)
    C[3:, 3:] = Sw @ phi.inertia_matrix
    return C


def gravity_wrench(phi: InertialParams, gravity: np.ndarray) -> np.ndarray:
    """G_A for gravity expressed in the body frame (enters the left-hand side)."""
    g = np.asarray(gravity, dtype=float).reshape(3)
    return np.concatenate([-phi.mass * g, -(skew(phi.first_moment) @ g)])


def net_wrench(phi: InertialParams, v, dv, gravity) -> np.ndarray:
    """Net wrench M_A dV + C_A(omega) V + G_A that must act on the body."""
    v6 = np.asarray(v, dtype=float).reshape(6)
    dv6 = np.asarray(dv, dtype=float).reshape(6)
    return mass_matrix(phi) @ dv6 + coriolis_matrix(phi, v6) @ v6 + gravity_wrench(phi, gravity)


def _K(a: np.ndarray) -> np.ndarray:
    # K(a) @ inertia6 == inertia_matrix @ a
    return np.array(
        [
            [a[0], 0.0, 0.0, a[1], 0.0, a[2]],
            [0.0, a[1], 0.0, a[0], a[2], 0.0],
            [0.0, 0.0, a[2], 0.0, a[1], a[0]],
        ]
    )


def regressor(v, dv, gravity) -> np.ndarray:
    """Y(v, dv, g) with Y @ phi == net_wrench(phi, v, dv, g) for every phi."""
    v6 = np.asarray(v, dtype=float).reshape(6)
    dv6 = np.asarray(dv, dtype=float).reshape(6)
    g = np.asarray(gravity, dtype=float).reshape(3)
    vl, w = v6[:3], v6[3:]
    al, aw = dv6[:3], dv6[3:]
    Sw, Sv, Sal, Saw, Sg = skew(w), skew(vl), skew(al), skew(aw), skew(g)
    Y = np.zeros((6, 10))
    Y[:3, 0] = al + cross3(w, vl) - g
    Y[:3, 1:4] = Saw + Sw @ Sw
    Y[3:, 1:4] = -Sal + Sg + Sv @ Sw - Sw @ Sv
    Y[3:, 4:] = _K(aw) + Sw @ _K(w)
    return Y


def bregman_divergence(L: PseudoInertia, L_hat: PseudoInertia) -> float:
    """log(|L_hat| / |L|) + tr(L_hat^-1 L) - 4; zero iff the two agree."""
    sign_h, logdet_h = np.linalg.slogdet(L_hat.matrix)
    sign, logdet = np.linalg.slogdet(L.matrix)
    if sign_h <= 0 or sign <= 0:
        raise ValueError("Bregman divergence needs positive definite arguments")
    return float(logdet_h - logdet + np.trace(np.linalg.solve(L_hat.matrix, L.matrix)) - 4.0)


def s_matrix(s: np.ndarray) -> np.ndarray:
    """Symmetric S with tr(L(phi) @ S) == phi . s for every phi.

    s is the 10-vector Y^T (V_r - V) in the phi ordering.
    """
    s = np.asarray(s, dtype=float).reshape(10)
    sm, sh, si = s[0], s[1:4], s[4:]
    S = np.empty((4, 4))
    tr = si[0] + si[1] + si[2]
    S[0, 0] = tr - si[0]
    S[1, 1] = tr - si[1]
    S[2, 2] = tr - si[2]
    S[0, 1] = S[1, 0] = -0.5 * si[3]
    S[1, 2] = S[2, 1] = -0.5 * si[4]
    S[0, 2] = S[2, 0] = -0.5 * si[5]
    S[:3, 3] = S[3, :3] = 0.5 * sh
    S[3, 3] = sm
    return S


def spd_repair(M: np.ndarray, floor: float = _SPD_FLOOR) -> np.ndarray:
    """Symmetrize and floor the eigenvalues; identity on healthy SPD input."""
    M = 0.5 * (M + M.T)
    try:
        # healthy fast path: margin above the floor certified by a factorization
        np.linalg.cholesky(M - floor * np.eye(M.shape[0]))
        return M
    except np.linalg.LinAlgError:
        pass
    w, V = np.linalg.eigh(M)
    if w[0] >= floor:
        return M
    return (V * np.maximum(w, floor)) @ V.T


def natural_adaptation_step(
    L_hat: PseudoInertia, S: np.ndarray, gamma: float, gamma0: float, dt: float
) -> PseudoInertia:
    """Euler step of Ldot = (1/gamma) L (S - gamma0 L) L, SPD-repaired."""
    M = L_hat.matrix
    Ldot = (M @ (S - gamma0 * M) @ M) / gamma
    return PseudoInertia(spd_repair(M + dt * Ldot))
