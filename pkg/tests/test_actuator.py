import math

import numpy as np
import pytest

from hydroarm import actuator as act
from hydroarm import constraint as cn
from hydroarm import rbfnn


def make_params(**over):
    kw = dict(
        A_a=2e-3,
        A_b=1e-3,
        V_0a=2e-4,
        V_0b=2e-4,
        stroke=0.5,
        beta=1e9,
        c_l=1e-12,
        theta_v=(4e-8, 3e-8, 2e-8, 1e-8),
        p_s=1.6e7,
        p_r=1e5,
        friction_phi=(50.0, 20.0, 300.0, 10.0, 2.0, 5.0, 8.0),
        m_piston=20.0,
    )
    kw.update(over)
    return act.ActuatorParams(**kw)


def random_state(rng, params, margin=1e5):
    return act.ActuatorState(
        p_a=rng.uniform(params.p_r + margin, params.p_s - margin),
        p_b=rng.uniform(params.p_r + margin, params.p_s - margin),
        x=rng.uniform(0.05, params.stroke - 0.05),
        xdot=rng.uniform(-0.3, 0.3),
        z=rng.uniform(-0.005, 0.005),
    )


def test_params_validation():
    with pytest.raises(ValueError):
        make_params(A_a=-1.0)
    with pytest.raises(ValueError):
        make_params(p_r=2e7)
    with pytest.raises(ValueError):
        make_params(theta_v=(1e-8, -1e-8, 1e-8, 1e-8))
    p = make_params()
    assert np.allclose(p.theta_d, [1e-9, 2e-3, 1e-3, 1e-12])


def test_piston_force():
    p = make_params()
    s = act.ActuatorState(p_a=5e6, p_b=2e6, x=0.1, xdot=0.0)
    assert act.piston_force(s, p) == pytest.approx(2e-3 * 5e6 - 1e-3 * 2e6)


def test_friction_regressor_rest_and_fast():
    p = make_params()
    Y, zdot = act.friction_regressor(0.0, 0.004, p)
    assert zdot == 0.0
    assert np.allclose(Y, [0.0, 0.0, 0.0, 0.004, 0.0, 0.004, 0.0])
    Y, zdot = act.friction_regressor(1.0, 0.004, p)
    # far above v_t and v_s: tanh saturates, Stribeck factor dies
    assert Y[0] == pytest.approx(1.0)
    assert abs(Y[1]) < 1e-10 and abs(Y[5]) < 1e-10 and abs(Y[6]) < 1e-10
    assert Y[2] == pytest.approx(1.0)
    assert zdot == pytest.approx(1.0 - p.kappa_b * 0.004)
    f = act.friction_force(act.ActuatorState(1e6, 1e6, 0.1, 1.0, 0.004), p.friction_phi, p)
    assert f == pytest.approx(float(Y @ p.friction_phi))


def test_flow_rates_branches():
    p = make_params()
    s = act.ActuatorState(p_a=5e6, p_b=2e6, x=0.1, xdot=0.0)
    Q_a, Q_b = act.flow_rates(2.0, s, p)
    assert Q_a == pytest.approx(4e-8 * math.sqrt(1.6e7 - 5e6) * 2.0)
    assert Q_b == pytest.approx(-1e-8 * math.sqrt(2e6 - 1e5) * 2.0)
    Q_a, Q_b = act.flow_rates(-2.0, s, p)
    assert Q_a == pytest.approx(2e-8 * math.sqrt(5e6 - 1e5) * -2.0)
    assert Q_b == pytest.approx(3e-8 * math.sqrt(1.6e7 - 2e6) * 2.0)
    assert act.flow_rates(0.0, s, p) == (0.0, 0.0)


def test_flow_reverses_on_overpressure():
    p = make_params()
    s = act.ActuatorState(p_a=p.p_s + 1e6, p_b=2e6, x=0.1, xdot=0.0)
    Q_a, _ = act.flow_rates(2.0, s, p)
    assert Q_a < 0.0


def test_pressure_derivatives_hand_value():
    p = make_params(c_l=0.0)
    s = act.ActuatorState(p_a=5e6, p_b=2e6, x=0.1, xdot=0.2)
    pdot_a, pdot_b = act.pressure_derivatives(s, 1e-4, -5e-5, p)
    assert pdot_a == pytest.approx(1e9 / 4e-4 * (1e-4 - 2e-3 * 0.2))
    assert pdot_b == pytest.approx(1e9 / 6e-4 * (-5e-5 + 1e-3 * 0.2))


def test_uf_equals_flow_combination():
    """-Y_v . theta_v must equal Q_a/D_a - Q_b/D_b on both branches."""
    p = make_params()
    rng = np.random.default_rng(8)
    for _ in range(300):
        s = random_state(rng, p)
        u = rng.uniform(-10.0, 10.0)
        Q_a, Q_b = act.flow_rates(u, s, p)
        D_a = p.V_0a / p.A_a + s.x
        D_b = p.V_0b / p.A_b + (p.stroke - s.x)
        direct = Q_a / D_a - Q_b / D_b
        assert act.uf_from_valve(u, s, p.theta_v, p) == pytest.approx(direct, rel=1e-12, abs=1e-15)


def test_force_rate_matches_pressure_route():
    p = make_params()
    rng = np.random.default_rng(9)
    for _ in range(200):
        s = random_state(rng, p)
        u = rng.uniform(-8.0, 8.0)
        Q_a, Q_b = act.flow_rates(u, s, p)
        pdot_a, pdot_b = act.pressure_derivatives(s, Q_a, Q_b, p)
        direct = p.A_a * pdot_a - p.A_b * pdot_b
        assert act.force_rate(u, s, p) == pytest.approx(direct, rel=1e-9, abs=1e-6)


def test_pressure_regressor_reproduces_uf():
    """Y_d theta_d with the true force rate recovers the flow command."""
    p = make_params()
    rng = np.random.default_rng(10)
    for _ in range(200):
        s = random_state(rng, p)
        u = rng.uniform(-8.0, 8.0)
        fdot = act.force_rate(u, s, p)
        lhs = float(act.pressure_regressor(fdot, s, p) @ p.theta_d)
        rhs = act.uf_from_valve(u, s, p.theta_v, p)
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


def test_valve_round_trip():
    p = make_params()
    rng = np.random.default_rng(11)
    for _ in range(500):
        s = random_state(rng, p)
        u = rng.uniform(0.01, 10.0) * (1 if rng.random() < 0.5 else -1)
        u_f = act.uf_from_valve(u, s, p.theta_v, p)
        u_back, degraded = act.uf_to_valve(u_f, s, p.theta_v, p)
        assert not degraded
        assert u_back == pytest.approx(u, rel=1e-10)


def test_uf_to_valve_zero_and_degraded():
    p = make_params()
    s = act.ActuatorState(p_a=5e6, p_b=2e6, x=0.1, xdot=0.0)
    assert act.uf_to_valve(0.0, s, p.theta_v, p) == (0.0, False)
    dead = act.ActuatorState(p_a=p.p_s, p_b=p.p_r, x=0.1, xdot=0.0)
    u, degraded = act.uf_to_valve(1e-3, dead, p.theta_v, p)
    assert degraded
    assert abs(u) <= p.u_max


def test_required_uf_composition():
    p = make_params()
    s = act.ActuatorState(p_a=5e6, p_b=2e6, x=0.1, xdot=0.1)
    th_d = p.theta_d * 0.5
    out = act.required_uf(9e3, 1e4, 0.3, s, th_d, k_f=2e-8, k_x=0.02, rbf_prediction=0.01, params=p)
    e_f = 9e3 - act.piston_force(s, p)
    e_x = 0.3 - 0.1
    expect = float(act.pressure_regressor(1e4, s, p) @ th_d) + 2e-8 * e_f + 0.02 * e_x + 0.01
    assert out == pytest.approx(expect)


def test_plant_equilibrium_fixed_point():
    p = make_params()
    s0 = act.ActuatorState(p_a=4e6, p_b=4e6, x=0.2, xdot=0.0, z=0.0)
    f_hold = act.piston_force(s0, p)
    s1 = act.plant_step(s0, 0.0, f_hold, p, 1e-3)
    assert (s1.p_a, s1.p_b, s1.x, s1.xdot, s1.z) == (4e6, 4e6, 0.2, 0.0, 0.0)


def test_plant_moves_with_positive_valve():
    p = make_params()
    s = act.ActuatorState(p_a=4e6, p_b=4e6, x=0.2, xdot=0.0, z=0.0)
    f_hold = act.piston_force(s, p)
    for _ in range(200):
        s = act.plant_step(s, 2.0, f_hold, p, 2e-4)
    assert s.xdot > 0.0
    assert s.x > 0.2
    assert s.p_a > 4e6 or s.p_b < 4e6


def test_plant_pressure_and_stroke_clamps():
    p = make_params()
    s = act.ActuatorState(p_a=4e6, p_b=4e6, x=0.45, xdot=0.0, z=0.0)
    for _ in range(4000):
        s = act.plant_step(s, 8.0, -5e2, p, 2e-4)
    assert p.p_r <= s.p_a <= p.p_s
    assert p.p_r <= s.p_b <= p.p_s
    assert s.x == p.stroke
    assert s.xdot == 0.0


def test_plant_rejects_nan():
    p = make_params()
    s = act.ActuatorState(p_a=float("nan"), p_b=4e6, x=0.2, xdot=0.0)
    with pytest.raises(act.PlantError):
        act.plant_step(s, 1.0, 0.0, p, 1e-3)


def _integrate(p, s0, u, f_load, T, dt):
    s = s0.copy()
    n = round(T / dt)
    for _ in range(n):
        s = act.plant_step(s, u, f_load, p, dt)
    return np.array([s.x, s.xdot, s.p_a, s.p_b, s.z])


def test_plant_step_doubling_order():
    p = make_params(V_0a=1e-4, V_0b=1e-4, A_a=1e-3, A_b=8e-4, stroke=0.3)
    s0 = act.ActuatorState(p_a=6e6, p_b=6e6, x=0.15, xdot=0.0, z=0.0)
    f_load = act.piston_force(s0, p) - 200.0
    T = 5e-3
    y1 = _integrate(p, s0, 0.5, f_load, T, 2.5e-4)
    y2 = _integrate(p, s0, 0.5, f_load, T, 1.25e-4)
    y3 = _integrate(p, s0, 0.5, f_load, T, 6.25e-5)
    # clamps must stay inactive or the convergence measurement is void
    assert p.p_r < y3[2] < p.p_s and p.p_r < y3[3] < p.p_s
    assert 0.0 < y3[0] < p.stroke
    scale = np.maximum(np.abs(y3), 1.0)
    e1 = np.linalg.norm((y1 - y2) / scale)
    e2 = np.linalg.norm((y2 - y3) / scale)
    order = math.log2(e1 / e2)
    assert order >= 3.5


def test_adapt_theta_steps_euler_and_floor():
    g = act.ActuatorGains(k_f=2e-8, k_x=0.02, gamma_f=10.0, gamma_f0=0.1,
                          gamma_v=1e-16, gamma_v0=0.1, gamma_d=1e-12, gamma_d0=0.1)
    th_f = np.ones(7)
    th_v = np.full(4, 1e-8)
    th_d = np.array([1e-9, 1e-3, 1e-3, 0.0])
    Y_f = np.arange(7.0)
    Y_v = np.array([-1.0, 0.0, 0.0, -0.5])
    Y_d = np.array([1e4, 0.1, 0.1, 1e5])
    e_f, e_x = 50.0, 0.01
    out_f, out_v, out_d = act.adapt_theta_steps(th_f, th_v, th_d, e_f, e_x, Y_f, Y_v, Y_d, g, 1e-3)
    assert np.allclose(out_f, th_f + 1e-3 * 10.0 * ((0.01 / 0.02) * Y_f - 0.1 * th_f))
    assert np.allclose(out_d, th_d + 1e-3 * 1e-12 * ((50.0 / 0.02) * Y_d - 0.1 * th_d))
    # negative drive on theta_v crushes entries onto the floor
    g2 = act.ActuatorGains(k_f=2e-8, k_x=0.02, gamma_v=1.0, gamma_v0=0.0)
    _, floored, _ = act.adapt_theta_steps(th_f, th_v, th_d, -1e3, 0.0, Y_f, np.ones(4), Y_d, g2, 1.0)
    assert np.all(floored == act.THETA_V_FLOOR)


def test_gains_default_nn_leakage_from_kxkf():
    g = act.ActuatorGains(k_f=2e-8, k_x=0.02)
    assert g.delta_a == pytest.approx(1.5 * 0.02 * 2e-8)
    assert g.bar_delta_a == pytest.approx(0.5 * 0.02 * 2e-8)


def test_adapt_actuator_step_moves_all_estimates():
    p = make_params()
    g = act.ActuatorGains(k_f=2e-8, k_x=0.02, gamma_f=1.0, gamma_v=1e-18,
                          gamma_d=1e-14, delta_db=1e-3, delta_a=1.0, bar_delta_a=1.0)
    rng = np.random.default_rng(12)
    est = act.ActuatorEstimates(
        theta_f_hat=np.zeros(7),
        theta_v_hat=p.theta_v * 0.5,
        theta_d_hat=p.theta_d * 0.5,
        db=cn.DbInverseState(),
        net=rbfnn.make_network(5, 5, 1, width=0.5, rng=rng),
    )
    s = act.ActuatorState(p_a=5e6, p_b=3e6, x=0.2, xdot=0.1, z=0.001)
    chi = np.array([0.4, 0.1, 0.3, 0.2, 0.05])
    before = est.flat().copy()
    act.adapt_actuator_step(
        est, s, e_f=1e3, e_x=0.05, u_star=2.0, udot_star=1.0, v_out=2.1,
        u_applied=1.5, fdot_pr=5e3, chi_a=chi, g=g, params=p, dt=1e-3, ctrl_z=0.001,
    )
    after = est.flat()
    assert np.all(np.isfinite(after))
    assert not np.allclose(before, after)
    Y_f, _ = act.friction_regressor(0.1, 0.001, p)
    assert np.allclose(est.theta_f_hat, 1e-3 * 1.0 * (0.05 / 0.02) * Y_f)
