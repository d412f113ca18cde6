"""Decentralized Gaussian RBF estimators.

One 6-output network per rigid-body subsystem, one scalar-output network per
actuator channel. Networks adapt online only, with sigma-modified (leakage)
laws; there is no offline training path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class RbfNetwork:
    """Gaussian RBF net: psi_j = exp(-||chi - c_j||^2 / b_j^2).

    `weights` is n x d (d outputs), `bias` the d-vector additive estimate
    (the paper's eps-hat). Both are the mutable adaptation state.
    """

    centers: np.ndarray
    widths: np.ndarray
    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        self.widths = np.asarray(self.widths, dtype=float).reshape(self.centers.shape[0])
        if not (self.widths > 0).all():
            raise ValueError("widths must be positive")
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.ndim == 1:
            self.weights = self.weights[:, None]
        self.bias = np.atleast_1d(np.asarray(self.bias, dtype=float))
        n, d = self.weights.shape
        if n != self.centers.shape[0] or d != self.bias.shape[0]:
            raise ValueError("inconsistent network shapes")

    @property
    def n_nodes(self) -> int:
        return self.centers.shape[0]

    @property
    def input_dim(self) -> int:
        return self.centers.shape[1]


def make_network(n_nodes: int, input_dim: int, output_dim: int, width: float, rng) -> RbfNetwork:
    """Fresh net: centers uniform in [-1, 1]^m, zero weights and bias."""
    centers = rng.uniform(-1.0, 1.0, (n_nodes, input_dim))
    return RbfNetwork(
        centers,
        np.full(n_nodes, float(width)),
        np.zeros((n_nodes, output_dim)),
        np.zeros(output_dim),
    )


def activation(net: RbfNetwork, chi) -> np.ndarray:
    chi = np.asarray(chi, dtype=float).reshape(-1)
    if chi.shape[0] != net.input_dim:
        raise ValueError(f"input dim {chi.shape[0]} != network dim {net.input_dim}")
    d = net.centers - chi
    return np.exp(-np.einsum("ij,ij->i", d, d) / net.widths**2)


def predict(net: RbfNetwork, chi) -> np.ndarray:
    """W^T Psi(chi) + bias."""
    return net.weights.T @ activation(net, chi) + net.bias


def adapt_rigid_step(
    net: RbfNetwork,
    chi,
    velocity_error: np.ndarray,
    Gamma: float,
    tau0: float,
    pi_gain: float,
    pi0: float,
    dt: float,
) -> RbfNetwork:
    """Wdot = Gamma (Psi e^T - tau0 W), biasdot = pi (e - pi0 bias); in place."""
    e = np.asarray(velocity_error, dtype=float).reshape(-1)
    psi = activation(net, chi)
    net.weights += dt * Gamma * (np.outer(psi, e) - tau0 * net.weights)
    net.bias += dt * pi_gain * (e - pi0 * net.bias)
    return net


def adapt_actuator_step(
    net: RbfNetwork,
    chi_a,
    force_error: float,
    delta: float,
    delta0: float,
    bar_delta: float,
    bar_delta0: float,
    k_x: float,
    dt: float,
) -> RbfNetwork:
    """Scalar-output laws with the printed 1/k_x scaling; updates in place."""
    psi = activation(net, chi_a)
    scaled = force_error / k_x
    net.weights[:, 0] += dt * delta * (scaled * psi - delta0 * net.weights[:, 0])
    net.bias[0] += dt * bar_delta * (scaled - bar_delta0 * net.bias[0])
    return net
