"""6D spatial vector algebra.

Velocities stack as [linear, angular], forces as [force, moment]. A frame
displacement (R, r) maps velocities from the parent frame A down to B via
U^T and forces from B up to A via U, with

    U = [[R, 0], [skew(r) R, R]].

The duality (U^T V)^T F = V^T (U F) is what makes the virtual power
bookkeeping telescope, so transforms are kept exactly orthonormal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .util import orthonormalize

_ORTHO_TOL = 1e-8


def skew(r) -> np.ndarray:
    """Skew-symmetric matrix of a 3-vector: skew(r) @ v == cross(r, v)."""
    r = np.asarray(r, dtype=float)
    return np.array(
        [
            [0.0, -r[2], r[1]],
            [r[2], 0.0, -r[0]],
            [-r[1], r[0], 0.0],
        ]
    )


def _check_rotation(R: np.ndarray, tol: float = _ORTHO_TOL) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {R.shape}")
    err = np.abs(R @ R.T - np.eye(3)).max()
    if err > tol or np.linalg.det(R) < 0.0:
        raise ValueError(f"rotation not orthonormal (defect {err:.2e})")
    return R


@dataclass(frozen=True)
class SpatialVelocity:
    """Linear/angular velocity pair of a frame, expressed in that frame."""

    linear: np.ndarray
    angular: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "linear", np.asarray(self.linear, dtype=float).reshape(3))
        object.__setattr__(self, "angular", np.asarray(self.angular, dtype=float).reshape(3))
        if not (np.isfinite(self.linear).all() and np.isfinite(self.angular).all()):
            raise ValueError("non-finite spatial velocity")

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])

    @classmethod
    def from_array(cls, a) -> "SpatialVelocity":
        a = np.asarray(a, dtype=float).reshape(6)
        return cls(a[:3], a[3:])

    def __array__(self, dtype=None):
        a = self.to_array()
        return a.astype(dtype) if dtype is not None else a


@dataclass(frozen=True)
class SpatialForce:
    """Force/moment pair acting at a frame, expressed in that frame."""

    force: np.ndarray
    moment: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "force", np.asarray(self.force, dtype=float).reshape(3))
        object.__setattr__(self, "moment", np.asarray(self.moment, dtype=float).reshape(3))
        if not (np.isfinite(self.force).all() and np.isfinite(self.moment).all()):
            raise ValueError("non-finite spatial force")

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.force, self.moment])

    @classmethod
    def from_array(cls, a) -> "SpatialForce":
        a = np.asarray(a, dtype=float).reshape(6)
        return cls(a[:3], a[3:])

    def __array__(self, dtype=None):
        a = self.to_array()
        return a.astype(dtype) if dtype is not None else a


@dataclass(frozen=True)
class Transform6:
    """Frame displacement from A to B: rotation ^A R_B and offset ^A r_AB.

    The 6x6 matrix U is materialized on demand; storing (R, r) keeps the
    rotation orthonormal over long compositions.
    """

    rotation: np.ndarray
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", _check_rotation(self.rotation))
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=float).reshape(3))

    @classmethod
    def identity(cls) -> "Transform6":
        return cls(np.eye(3), np.zeros(3))

    def as_matrix(self) -> np.ndarray:
        U = np.zeros((6, 6))
        U[:3, :3] = self.rotation
        U[3:, 3:] = self.rotation
        U[3:, :3] = skew(self.offset) @ self.rotation
        return U

    def compose(self, other: "Transform6") -> "Transform6":
        """Transform A->B composed with B->C, yielding A->C."""
        return Transform6(self.rotation @ other.rotation, self.offset + self.rotation @ other.offset)

    def inverse(self) -> "Transform6":
        Rt = self.rotation.T
        return Transform6(Rt, -(Rt @ self.offset))

    def renormalized(self) -> "Transform6":
        return Transform6(orthonormalize(self.rotation), self.offset)


def assemble_transform(R, r) -> np.ndarray:
    """The 6x6 transform [[R, 0], [skew(r) R, R]]; rejects non-orthonormal R."""
    return Transform6(np.asarray(R, dtype=float), np.asarray(r, dtype=float)).as_matrix()


def cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """3-vector cross product without np.cross dispatch overhead."""
    return np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def xform_velocity(R: np.ndarray, r: np.ndarray, v6: np.ndarray) -> np.ndarray:
    """U^T applied to a raw 6-vector velocity (hot path for the recursions)."""
    v, w = v6[:3], v6[3:]
    out = np.empty(6)
    out[:3] = R.T @ (v - cross3(r, w))
    out[3:] = R.T @ w
    return out


def xform_force(R: np.ndarray, r: np.ndarray, f6: np.ndarray) -> np.ndarray:
    """U applied to a raw 6-vector force (hot path for the recursions)."""
    f, m = f6[:3], f6[3:]
    Rf = R @ f
    out = np.empty(6)
    out[:3] = Rf
    out[3:] = R @ m + cross3(r, Rf)
    return out


def transform_velocity(U: Transform6, v: SpatialVelocity) -> SpatialVelocity:
    """Map a velocity observed at frame A into frame B: ^B V = U^T ^A V."""
    return SpatialVelocity.from_array(xform_velocity(U.rotation, U.offset, v.to_array()))


def transform_force(U: Transform6, f: SpatialForce) -> SpatialForce:
    """Map a force applied at frame B into frame A: ^A F = U ^B F."""
    return SpatialForce.from_array(xform_force(U.rotation, U.offset, f.to_array()))
