import numpy as np
import pytest

from hydroarm.rigidbody import (
    InertialParams,
    PseudoInertia,
    L_to_phi,
    bregman_divergence,
    coriolis_matrix,
    gravity_wrench,
    mass_matrix,
    natural_adaptation_step,
    net_wrench,
    phi_to_L,
    regressor,
    s_matrix,
)
from hydroarm.spatial import skew


def random_body(rng) -> InertialParams:
    # building the inertia from a positive mass-covariance keeps the
    # pseudo-inertia SPD (triangle inequality holds by construction)
    m = rng.uniform(0.5, 50.0)
    com = rng.uniform(-0.3, 0.3, 3)
    D = rng.standard_normal((3, 3))
    cov = m * (0.02 * D @ D.T + np.eye(3) * rng.uniform(0.01, 0.05))
    Ic = np.trace(cov) * np.eye(3) - cov
    I = Ic + m * (np.dot(com, com) * np.eye(3) - np.outer(com, com))
    return InertialParams(m, m * com, np.array([I[0, 0], I[1, 1], I[2, 2], I[0, 1], I[1, 2], I[0, 2]]))


def oracle_wrench(phi: InertialParams, v6, dv6, g):
    """Independent assembly straight from the momentum balance."""
    m, h, I = phi.mass, phi.first_moment, phi.inertia_matrix
    v, w = v6[:3], v6[3:]
    dv, dw = dv6[:3], dv6[3:]
    p = m * v - np.cross(h, w)
    L = I @ w + np.cross(h, v)
    f = m * dv - np.cross(h, dw) + np.cross(w, p) - m * g
    mom = np.cross(h, dv) + I @ dw + np.cross(w, L) + np.cross(v, p) - np.cross(h, g)
    return np.concatenate([f, mom])


def test_zero_state_zero_wrench():
    phi = random_body(np.random.default_rng(0))
    out = net_wrench(phi, np.zeros(6), np.zeros(6), np.zeros(3))
    assert np.allclose(out, 0.0)


def test_point_mass_newton():
    phi = InertialParams(2.0, np.zeros(3), np.array([1e-6, 1e-6, 1e-6, 0, 0, 0]))
    a = np.array([1.0, -2.0, 0.5])
    out = net_wrench(phi, np.zeros(6), np.concatenate([a, np.zeros(3)]), np.zeros(3))
    assert np.allclose(out[:3], 2.0 * a)
    assert np.allclose(out[3:], 0.0, atol=1e-5)


def test_net_wrench_matches_momentum_oracle():
    rng = np.random.default_rng(42)
    for _ in range(200):
        phi = random_body(rng)
        v6 = rng.standard_normal(6)
        dv6 = rng.standard_normal(6)
        g = rng.standard_normal(3) * 9.81
        got = net_wrench(phi, v6, dv6, g)
        want = oracle_wrench(phi, v6, dv6, g)
        assert np.allclose(got, want, atol=1e-10 * max(1.0, np.abs(want).max()))


def test_regressor_zero_state():
    assert np.allclose(regressor(np.zeros(6), np.zeros(6), np.zeros(3)), 0.0)


def test_regressor_mass_column():
    a = np.array([0.3, -0.7, 1.1])
    Y = regressor(np.zeros(6), np.concatenate([a, np.zeros(3)]), np.zeros(3))
    assert np.allclose(Y[:3, 0], a)
    assert np.allclose(Y[3:, 0], 0.0)


def test_regressor_factorization_acceptance():
    # acceptance criterion 1: 1000 random states, relative 1e-10, under 1 s
    import time

    rng = np.random.default_rng(1234)
    t0 = time.perf_counter()
    for _ in range(1000):
        phi = random_body(rng)
        v6 = rng.standard_normal(6) * 2.0
        dv6 = rng.standard_normal(6) * 3.0
        g = rng.standard_normal(3) * 9.81
        Y = regressor(v6, dv6, g)
        w = net_wrench(phi, v6, dv6, g)
        assert np.abs(Y @ phi.phi - w).max() <= 1e-10 * max(1.0, np.abs(w).max())
    assert time.perf_counter() - t0 < 1.0


def test_explicit_matrices_match_oracle_terms():
    rng = np.random.default_rng(9)
    phi = random_body(rng)
    v6 = rng.standard_normal(6)
    g = rng.standard_normal(3)
    M = mass_matrix(phi)
    assert np.allclose(M, M.T)
    # M block structure
    assert np.allclose(M[:3, :3], phi.mass * np.eye(3))
    assert np.allclose(M[:3, 3:], -skew(phi.first_moment))
    # C @ V equals the velocity-product part of the oracle
    C = coriolis_matrix(phi, v6)
    vel_part = oracle_wrench(phi, v6, np.zeros(6), np.zeros(3))
    assert np.allclose(C @ v6, vel_part, atol=1e-12 * max(1.0, np.abs(vel_part).max()))
    G = gravity_wrench(phi, g)
    grav_part = oracle_wrench(phi, np.zeros(6), np.zeros(6), g)
    assert np.allclose(G, grav_part)


def test_phi_L_round_trip():
    rng = np.random.default_rng(21)
    for _ in range(100):
        phi = random_body(rng)
        L = phi_to_L(phi)
        back = L_to_phi(L)
        assert np.allclose(back.phi, phi.phi, atol=1e-14 * max(1.0, np.abs(phi.phi).max()))


def test_phi_to_L_point_mass():
    phi = InertialParams(1.0, np.zeros(3), np.array([1e-9, 1e-9, 1e-9, 0, 0, 0]))
    L = phi_to_L(phi).matrix
    assert abs(L[3, 3] - 1.0) < 1e-15
    assert np.abs(L[:3, 3]).max() < 1e-15


def test_phi_to_L_identity_inertia():
    phi = InertialParams(1.0, np.zeros(3), np.array([1.0, 1.0, 1.0, 0, 0, 0]))
    L = phi_to_L(phi).matrix
    assert np.allclose(L[:3, :3], 0.5 * np.eye(3))


def test_pseudo_inertia_rejects_non_spd():
    with pytest.raises(ValueError):
        PseudoInertia(np.diag([1.0, 1.0, 1.0, -0.1]))


def test_bregman_self_zero():
    L = phi_to_L(random_body(np.random.default_rng(2)))
    assert abs(bregman_divergence(L, L)) <= 1e-12


def test_bregman_reference_value():
    L = PseudoInertia(np.eye(4))
    Lh = PseudoInertia(2.0 * np.eye(4))
    want = 4.0 * np.log(2.0) + 4.0 / 2.0 - 4.0
    assert abs(bregman_divergence(L, Lh) - want) < 1e-12


def test_bregman_nonnegative_acceptance():
    # acceptance criterion 2: 1000 random SPD pairs
    rng = np.random.default_rng(77)
    for _ in range(1000):
        L = phi_to_L(random_body(rng))
        Lh = phi_to_L(random_body(rng))
        assert bregman_divergence(L, Lh) >= -1e-12


def test_s_matrix_trace_identity():
    rng = np.random.default_rng(31)
    for _ in range(100):
        s = rng.standard_normal(10)
        S = s_matrix(s)
        assert np.allclose(S, S.T)
        phi = random_body(rng)
        assert abs(np.trace(phi_to_L(phi).matrix @ S) - phi.phi @ s) <= 1e-10 * max(
            1.0, abs(phi.phi @ s)
        )


def test_adaptation_fixed_point():
    L = phi_to_L(random_body(np.random.default_rng(4)))
    gamma0 = 0.3
    out = natural_adaptation_step(L, gamma0 * L.matrix, gamma=2.0, gamma0=gamma0, dt=1e-3)
    assert np.allclose(out.matrix, L.matrix, atol=1e-14)


def test_adaptation_large_gamma_freezes():
    L = phi_to_L(random_body(np.random.default_rng(5)))
    S = np.eye(4)
    out = natural_adaptation_step(L, S, gamma=1e12, gamma0=0.0, dt=1e-3)
    assert np.abs(out.matrix - L.matrix).max() < 1e-9


def test_adaptation_hand_step():
    out = natural_adaptation_step(PseudoInertia(np.eye(4)), np.eye(4), 1.0, 0.0, 1e-3)
    assert np.allclose(out.matrix, 1.001 * np.eye(4), atol=1e-15)


def test_adaptation_preserves_spd():
    rng = np.random.default_rng(6)
    L = phi_to_L(random_body(rng))
    # hostile S pushing toward indefiniteness
    for _ in range(50):
        S = -10.0 * np.eye(4) + rng.standard_normal((4, 4))
        S = 0.5 * (S + S.T)
        L = natural_adaptation_step(L, S, gamma=0.05, gamma0=0.0, dt=0.01)
        assert np.linalg.eigvalsh(L.matrix).min() >= 1e-9 * (1 - 1e-12)
