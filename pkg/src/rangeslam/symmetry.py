"""The Range-SLAM symmetry group SE_2(3) x SOT(3)^n and its actions.

States carry landmarks in the body frame, ``q_i = R^T (p_i - x)``. Landmark
parts of group elements are stored as stacked arrays (``QR`` of shape
(n, 3, 3) and ``Qc`` of shape (n,)) so that per-landmark work vectorises.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lie import (
    ANTIPODAL_TOL,
    SMALL_ANGLE,
    ExtendedPose,
    ScaledRot,
    adjoint_se23,
    exp_se23,
    exp_so3,
    hat,
    log_se23,
    rotation_between,
)

E3 = np.array([0.0, 0.0, 1.0])
GRAVITY = 9.81

# Differential of the SOT(3) normal coordinates at e3.
DSIGMA = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, -1.0]])
DSIGMA_INV = DSIGMA.T


class ChartError(ValueError):
    """A landmark left the domain of the SOT(3) normal coordinates."""


class DegenerateLandmarkError(ValueError):
    """A body-frame landmark has zero norm (vehicle co-located with a beacon)."""


@dataclass(frozen=True, eq=False)
class SlamState:
    pose: ExtendedPose
    q: np.ndarray  # (n, 3) body-frame landmark positions

    @property
    def n(self) -> int:
        return len(self.q)

    def world_landmarks(self) -> np.ndarray:
        return self.q @ self.pose.R.T + self.pose.x

    @staticmethod
    def from_world(pose: ExtendedPose, p: np.ndarray) -> "SlamState":
        p = np.asarray(p, dtype=float).reshape(-1, 3)
        return SlamState(pose, (p - pose.x) @ pose.R)


@dataclass(frozen=True, eq=False)
class SymmetryElement:
    T: ExtendedPose
    QR: np.ndarray  # (n, 3, 3)
    Qc: np.ndarray  # (n,)

    @property
    def n(self) -> int:
        return len(self.Qc)

    @property
    def lm(self) -> list[ScaledRot]:
        return [ScaledRot(R, float(c)) for R, c in zip(self.QR, self.Qc)]

    @staticmethod
    def identity(n: int) -> "SymmetryElement":
        return SymmetryElement(ExtendedPose.identity(), np.tile(np.eye(3), (n, 1, 1)), np.ones(n))

    @staticmethod
    def from_parts(T: ExtendedPose, lm: list[ScaledRot]) -> "SymmetryElement":
        QR = np.array([Q.R for Q in lm]).reshape(-1, 3, 3)
        Qc = np.array([Q.c for Q in lm], dtype=float)
        return SymmetryElement(T, QR, Qc)

    def __matmul__(self, other: "SymmetryElement") -> "SymmetryElement":
        return SymmetryElement(self.T @ other.T, self.QR @ other.QR, self.Qc * other.Qc)

    def inverse(self) -> "SymmetryElement":
        return SymmetryElement(self.T.inverse(), np.swapaxes(self.QR, -1, -2), 1.0 / self.Qc)


@dataclass(frozen=True, eq=False)
class AlgebraElement:
    nav: np.ndarray  # (9,)
    lm: np.ndarray  # (n, 4): rotation (3) then log-scale

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.nav, self.lm.ravel()])

    @staticmethod
    def from_vector(u: np.ndarray) -> "AlgebraElement":
        u = np.asarray(u, dtype=float)
        return AlgebraElement(u[:9].copy(), u[9:].reshape(-1, 4).copy())

    def __mul__(self, s: float) -> "AlgebraElement":
        return AlgebraElement(self.nav * s, self.lm * s)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class Origin:
    """Fixed origin state: configurable pose, every landmark at e3."""

    pose: ExtendedPose = field(default_factory=ExtendedPose.identity)

    def state(self, n: int) -> SlamState:
        return SlamState(self.pose, np.tile(E3, (n, 1)))


def exp_group(u: AlgebraElement) -> SymmetryElement:
    lm = np.asarray(u.lm, dtype=float).reshape(-1, 4)
    return SymmetryElement(exp_se23(u.nav), exp_so3(lm[:, :3]), np.exp(lm[:, 3]))


def state_action(X: SymmetryElement, xi: SlamState) -> SlamState:
    """phi((T, Q_i), (P, q_i)) = (P T, c_i^-1 R_i^T q_i)."""
    if X.n != xi.n:
        raise ValueError(f"group element has {X.n} landmarks, state has {xi.n}")
    q = np.einsum("nji,nj->ni", X.QR, xi.q) / X.Qc[:, None]
    return SlamState(xi.pose @ X.T, q)


def _check_norms(q: np.ndarray) -> np.ndarray:
    r = np.linalg.norm(q, axis=-1)
    if np.any(r <= 0.0):
        raise DegenerateLandmarkError("landmark coincides with the vehicle")
    return r


def output_h(xi: SlamState) -> np.ndarray:
    return _check_norms(xi.q)


def output_h_world(pose: ExtendedPose, p: np.ndarray) -> np.ndarray:
    return _check_norms(np.asarray(p, dtype=float).reshape(-1, 3) - pose.x)


def output_action(X: SymmetryElement, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("ranges must be positive")
    return y / X.Qc


def lift_nav(pose: ExtendedPose, omega: np.ndarray, accel: np.ndarray, g: float = GRAVITY) -> np.ndarray:
    """Navigation part of the lift, (U + D) + P^-1 (G - D) P, in vector form."""
    return np.concatenate([omega, accel + g * pose.R[2], pose.R.T @ pose.v])


def lift_landmarks(pose: ExtendedPose, q: np.ndarray, omega: np.ndarray) -> np.ndarray:
    r2 = _check_norms(q) ** 2
    mu = pose.R.T @ pose.v
    rot = omega + np.cross(q, mu) / r2[:, None]
    scale = (q @ mu) / r2
    return np.column_stack([rot, scale])


def lift(xi: SlamState, omega: np.ndarray, accel: np.ndarray, g: float = GRAVITY) -> AlgebraElement:
    omega = np.asarray(omega, dtype=float)
    accel = np.asarray(accel, dtype=float)
    return AlgebraElement(lift_nav(xi.pose, omega, accel, g), lift_landmarks(xi.pose, xi.q, omega))


def lift_matrix_nav(pose: ExtendedPose, omega, accel, g: float = GRAVITY) -> np.ndarray:
    """The 5x5 form (U + D) + P^-1 (G - D) P exactly as written with U, D, G."""
    U = np.zeros((5, 5))
    U[:3, :3] = hat(omega)
    U[:3, 3] = accel
    D = np.zeros((5, 5))
    D[3, 4] = 1.0
    G = np.zeros((5, 5))
    G[:3, 3] = g * E3
    P = pose.as_matrix()
    return (U + D) + np.linalg.inv(P) @ (G - D) @ P


def system_dynamics(xi: SlamState, omega, accel, g: float = GRAVITY):
    """f_u: (R dot, v dot, x dot, q dot) for the body-frame state."""
    omega = np.asarray(omega, dtype=float)
    R, v = xi.pose.R, xi.pose.v
    Rdot = R @ hat(omega)
    vdot = R @ accel + g * E3
    xdot = v
    qdot = -np.cross(omega, xi.q) - R.T @ v
    return Rdot, vdot, xdot, qdot


def sigma_sot3(q: np.ndarray) -> np.ndarray:
    """SOT(3) normal coordinates of body-frame landmark(s) about e3."""
    q = np.asarray(q, dtype=float)
    r = np.linalg.norm(q, axis=-1)
    if np.any(r <= 0.0):
        raise DegenerateLandmarkError("landmark coincides with the vehicle")
    rxy = np.hypot(q[..., 0], q[..., 1])
    theta = np.arctan2(rxy, q[..., 2])
    if np.any(theta > np.pi - ANTIPODAL_TOL):
        raise ChartError("antipodal landmark coordinates")
    small = theta < SMALL_ANGLE
    t2 = theta * theta
    # arccos(q3/|q|) / |e3 x q| = (theta / sin theta) / |q|
    ratio = np.where(small, 1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0, theta / np.where(small, 1.0, np.sin(theta)))
    k = ratio / r
    return np.stack([k * q[..., 1], -k * q[..., 0], -np.log(r)], axis=-1)


def sigma_sot3_inv(c: np.ndarray) -> np.ndarray:
    """Inverse of ``sigma_sot3``: e^-c3 exp((c1, c2, 0))^T e3."""
    c = np.asarray(c, dtype=float)
    theta = np.hypot(c[..., 0], c[..., 1])
    small = theta < SMALL_ANGLE
    t2 = theta * theta
    sinc = np.where(small, 1.0 - t2 / 6.0 + t2 * t2 / 120.0, np.sin(theta) / np.where(small, 1.0, theta))
    r = np.exp(-c[..., 2])
    return np.stack([-r * sinc * c[..., 1], r * sinc * c[..., 0], r * np.cos(theta)], axis=-1)


def theta(xi: SlamState, origin: Origin) -> np.ndarray:
    nav = log_se23(origin.pose.inverse() @ xi.pose)
    return np.concatenate([nav, sigma_sot3(xi.q).ravel()])


def theta_inv(eps: np.ndarray, origin: Origin) -> SlamState:
    eps = np.asarray(eps, dtype=float)
    pose = origin.pose @ exp_se23(eps[:9])
    return SlamState(pose, sigma_sot3_inv(eps[9:].reshape(-1, 3)))


# Landmark block of D_E|id phi_origin(E): (w, s) -> -w x e3 - s e3.
_DPHI_LM = np.array(
    [[0.0, -1.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, -1.0]]
)


def dphi_origin(n: int) -> np.ndarray:
    """Differential at identity of E -> phi(E, origin), (9+3n) x (9+4n).

    The navigation tangent at the origin pose is expressed in exponential
    coordinates (P_origin exp(u)), landmark tangents in R^3.
    """
    D = np.zeros((9 + 3 * n, 9 + 4 * n))
    D[:9, :9] = np.eye(9)
    for i in range(n):
        D[9 + 3 * i : 12 + 3 * i, 9 + 4 * i : 13 + 4 * i] = _DPHI_LM
    return D


def dphi_origin_pinv(n: int) -> np.ndarray:
    # rows of dphi_origin are orthonormal, so the pseudo-inverse is the transpose
    return dphi_origin(n).T


def dtheta_origin(n: int) -> np.ndarray:
    D = np.zeros((9 + 3 * n, 9 + 3 * n))
    D[:9, :9] = np.eye(9)
    for i in range(n):
        D[9 + 3 * i : 12 + 3 * i, 9 + 3 * i : 12 + 3 * i] = DSIGMA
    return D


def correction_from_coords(delta: np.ndarray) -> AlgebraElement:
    """Map an error-coordinate vector to the algebra: Dphi^dagger Dtheta^-1 delta.

    For the landmark blocks this evaluates to (d1, d2, 0, d3).
    """
    delta = np.asarray(delta, dtype=float)
    lm3 = delta[9:].reshape(-1, 3)
    lm = np.column_stack([lm3[:, 0], lm3[:, 1], np.zeros(len(lm3)), lm3[:, 2]])
    return AlgebraElement(delta[:9].copy(), lm)


def adjoint_rslam(X: SymmetryElement) -> np.ndarray:
    n = X.n
    Ad = np.zeros((9 + 4 * n, 9 + 4 * n))
    Ad[:9, :9] = adjoint_se23(X.T)
    for i in range(n):
        j = 9 + 4 * i
        Ad[j : j + 3, j : j + 3] = X.QR[i]
        Ad[j + 3, j + 3] = 1.0
    return Ad


def transitivity_witness(xi1: SlamState, xi2: SlamState) -> SymmetryElement:
    """A group element X with phi(X, xi1) = xi2."""
    T = xi1.pose.inverse() @ xi2.pose
    r1 = _check_norms(xi1.q)
    r2 = _check_norms(xi2.q)
    # c^-1 R^T q1 = q2  <=>  R q2_dir = q1_dir
    QR = rotation_between(xi2.q, xi1.q)
    return SymmetryElement(T, QR.reshape(-1, 3, 3), r1 / r2)
