"""Small numeric helpers: rotations, clamping, causal filters."""

from __future__ import annotations

import math

import numpy as np


def clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_xyz_to_matrix(rx: float, ry: float, rz: float) -> np.ndarray:
    """R = Rx(rx) @ Ry(ry) @ Rz(rz), the XYZ convention used for references."""
    return rot_x(rx) @ rot_y(ry) @ rot_z(rz)


def rotation_log(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix (orientation error measure)."""
    tr = float(np.trace(R))
    c = clamp(0.5 * (tr - 1.0), -1.0, 1.0)
    angle = math.acos(c)
    if angle < 1e-12:
        return np.zeros(3)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if math.pi - angle < 1e-6:
        # off-diagonal differences vanish at pi; recover the axis from diag(R)
        axis = np.sqrt(np.maximum((np.diag(R) + 1.0) / 2.0, 0.0))
        axis *= np.where(w >= 0, 1.0, -1.0)
        n = np.linalg.norm(axis)
        return angle * axis / n if n > 0 else np.zeros(3)
    return angle * w / (2.0 * math.sin(angle))


def orthonormalize(R: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (polar decomposition via SVD)."""
    U, _, Vt = np.linalg.svd(R)
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(U @ Vt))
    return U @ D @ Vt


class LowPass:
    """First-order low-pass, discretized as y += a (u - y)."""

    def __init__(self, dt: float, cutoff_hz: float, shape: tuple[int, ...] = ()):
        tau = 1.0 / (2.0 * math.pi * cutoff_hz)
        self.alpha = dt / (tau + dt)
        self.y = np.zeros(shape) if shape else 0.0
        self._primed = False

    def step(self, u):
        if not self._primed:
            self.y = np.array(u, dtype=float) if np.ndim(u) else float(u)
            self._primed = True
        else:
            self.y = self.y + self.alpha * (u - self.y)
        return self.y


class DiffFilter:
    """Causal numerical differentiator for sampled signals.

    One-sample-delayed central difference (s_k - s_{k-2}) / (2 dt)
    followed by a first-order low-pass. The first two samples yield zero.
    """

    def __init__(self, dt: float, cutoff_hz: float = 50.0, shape: tuple[int, ...] = ()):
        self.dt = dt
        self.lp = LowPass(dt, cutoff_hz, shape)
        self._h: list = []

    def step(self, value):
        v = np.array(value, dtype=float) if np.ndim(value) else float(value)
        self._h.append(v)
        if len(self._h) < 3:
            d = np.zeros_like(v) if np.ndim(v) else 0.0
        else:
            d = (self._h[-1] - self._h[-3]) / (2.0 * self.dt)
            del self._h[0]
        return self.lp.step(d)
