import numpy as np
import pytest

from hydroarm import rbfnn


def test_activation_hand_value():
    net = rbfnn.RbfNetwork(
        centers=np.array([[1.0, 0.0], [0.0, 0.0]]),
        widths=np.array([2.0, 1.0]),
        weights=np.zeros((2, 1)),
        bias=np.zeros(1),
    )
    psi = rbfnn.activation(net, [0.0, 0.0])
    assert psi[0] == pytest.approx(np.exp(-0.25))
    assert psi[1] == pytest.approx(1.0)


def test_activation_decays_with_distance():
    rng = np.random.default_rng(0)
    net = rbfnn.make_network(8, 3, 2, width=1.5, rng=rng)
    near = rbfnn.activation(net, net.centers[3])
    far = rbfnn.activation(net, net.centers[3] + 10.0)
    assert near[3] == pytest.approx(1.0)
    assert np.all(far < 1e-6)


def test_activation_rejects_wrong_dim():
    rng = np.random.default_rng(1)
    net = rbfnn.make_network(4, 5, 1, width=1.0, rng=rng)
    with pytest.raises(ValueError):
        rbfnn.activation(net, np.zeros(4))


def test_predict_linear_in_weights():
    rng = np.random.default_rng(2)
    net = rbfnn.make_network(6, 2, 3, width=1.0, rng=rng)
    chi = rng.uniform(-1, 1, 2)
    assert np.allclose(rbfnn.predict(net, chi), 0.0)
    net.bias[:] = [1.0, -2.0, 0.5]
    assert np.allclose(rbfnn.predict(net, chi), [1.0, -2.0, 0.5])
    W = rng.standard_normal((6, 3))
    net.weights[:] = W
    psi = rbfnn.activation(net, chi)
    assert np.allclose(rbfnn.predict(net, chi), W.T @ psi + net.bias)


def test_make_network_seeded_and_bounded():
    a = rbfnn.make_network(10, 4, 1, width=0.5, rng=np.random.default_rng(42))
    b = rbfnn.make_network(10, 4, 1, width=0.5, rng=np.random.default_rng(42))
    assert np.array_equal(a.centers, b.centers)
    assert np.all(np.abs(a.centers) <= 1.0)
    assert a.n_nodes == 10 and a.input_dim == 4


def test_adapt_rigid_step_euler():
    rng = np.random.default_rng(3)
    net = rbfnn.make_network(5, 2, 6, width=1.0, rng=rng)
    net.weights[:] = rng.standard_normal((5, 6))
    net.bias[:] = rng.standard_normal(6)
    W0 = net.weights.copy()
    b0 = net.bias.copy()
    chi = rng.uniform(-1, 1, 2)
    e = rng.standard_normal(6)
    psi = rbfnn.activation(net, chi)
    rbfnn.adapt_rigid_step(net, chi, e, Gamma=350.0, tau0=0.01, pi_gain=20.0, pi0=0.02, dt=1e-3)
    assert np.allclose(net.weights, W0 + 1e-3 * 350.0 * (np.outer(psi, e) - 0.01 * W0))
    assert np.allclose(net.bias, b0 + 1e-3 * 20.0 * (e - 0.02 * b0))


def test_adapt_rigid_leakage_decays_without_error():
    rng = np.random.default_rng(4)
    net = rbfnn.make_network(3, 2, 6, width=1.0, rng=rng)
    net.weights[:] = 5.0
    for _ in range(200):
        rbfnn.adapt_rigid_step(net, np.zeros(2), np.zeros(6), 10.0, 0.5, 1.0, 0.5, 1e-2)
    assert np.all(np.abs(net.weights) < 5.0 * np.exp(-200 * 1e-2 * 10.0 * 0.5) + 1e-6)


def test_adapt_actuator_step_euler():
    rng = np.random.default_rng(5)
    net = rbfnn.make_network(4, 3, 1, width=0.5, rng=rng)
    net.weights[:, 0] = rng.standard_normal(4)
    net.bias[0] = 0.3
    W0 = net.weights[:, 0].copy()
    b0 = net.bias[0]
    chi = rng.uniform(-1, 1, 3)
    psi = rbfnn.activation(net, chi)
    rbfnn.adapt_actuator_step(
        net, chi, force_error=2.0, delta=1.2, delta0=0.1,
        bar_delta=0.4, bar_delta0=0.2, k_x=0.02, dt=1e-3,
    )
    scaled = 2.0 / 0.02
    assert np.allclose(net.weights[:, 0], W0 + 1e-3 * 1.2 * (scaled * psi - 0.1 * W0))
    assert net.bias[0] == pytest.approx(b0 + 1e-3 * 0.4 * (scaled - 0.2 * b0))
