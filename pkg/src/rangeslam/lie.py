"""Matrix Lie group primitives: SO(3), SE_2(3) and SOT(3).

Rotations are plain 3x3 numpy arrays. Tangent vectors are ordered
(rotation, velocity slot, position slot) for SE_2(3) and (rotation, log-scale)
for SOT(3). Most functions accept a leading batch dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SMALL_ANGLE = 1e-6
# Below this angle the higher-order coefficients ((1-cos t)/t^2 and friends) come from
# their Taylor series: the closed forms cancel catastrophically long before 1e-6.
SERIES_ANGLE = 0.1
# log_so3 refuses rotations closer than this to pi.
ANTIPODAL_TOL = 1e-6


class AntipodalRotationError(ValueError):
    """Raised when a logarithm is requested at (or numerically near) angle pi."""


def hat(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    out = np.zeros(u.shape[:-1] + (3, 3))
    out[..., 0, 1] = -u[..., 2]
    out[..., 0, 2] = u[..., 1]
    out[..., 1, 0] = u[..., 2]
    out[..., 1, 2] = -u[..., 0]
    out[..., 2, 0] = -u[..., 1]
    out[..., 2, 1] = u[..., 0]
    return out


def vee(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    return np.stack([M[..., 2, 1], M[..., 0, 2], M[..., 1, 0]], axis=-1)


def _poly(t2, coeffs):
    out = np.zeros_like(t2)
    for c in reversed(coeffs):
        out = out * t2 + c
    return out


# Taylor coefficients in t^2, exact to well below double precision for t < SERIES_ANGLE
_A = (1.0, -1 / 6, 1 / 120, -1 / 5040, 1 / 362880)
_B = (1 / 2, -1 / 24, 1 / 720, -1 / 40320, 1 / 3628800)
_C = (1 / 6, -1 / 120, 1 / 5040, -1 / 362880, 1 / 39916800)
_D = (1 / 24, -1 / 720, 1 / 40320, -1 / 3628800, 1 / 479001600)
_JINV = (1 / 12, 1 / 720, 1 / 30240, 1 / 1209600, 1 / 47900160)


def so3_coeffs(theta: np.ndarray):
    """Return sin(t)/t, (1-cos t)/t^2 and (t-sin t)/t^3 with series fallback."""
    theta = np.asarray(theta, dtype=float)
    t2 = theta * theta
    small = theta < SMALL_ANGLE
    series = theta < SERIES_ANGLE
    t = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - t2 / 6.0 + t2 * t2 / 120.0, np.sin(t) / t)
    t = np.where(series, 1.0, theta)
    b = np.where(series, _poly(t2, _B), (1.0 - np.cos(t)) / t**2)
    c = np.where(series, _poly(t2, _C), (t - np.sin(t)) / t**3)
    return a, b, c


def j2_coeff(theta: np.ndarray):
    """(t^2/2 + cos t - 1)/t^4, the K^2 coefficient of sum K^k/(k+2)!."""
    theta = np.asarray(theta, dtype=float)
    t2 = theta * theta
    series = theta < SERIES_ANGLE
    t = np.where(series, 1.0, theta)
    return np.where(series, _poly(t2, _D), (0.5 * t**2 - 2.0 * np.sin(0.5 * t) ** 2) / t**4)


def exp_so3(u: np.ndarray) -> np.ndarray:
    """Rodrigues formula."""
    u = np.asarray(u, dtype=float)
    theta = np.linalg.norm(u, axis=-1)
    a, b, _ = so3_coeffs(theta)
    K = hat(u)
    I = np.eye(3)
    return I + a[..., None, None] * K + b[..., None, None] * (K @ K)


def left_jacobian_so3(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    theta = np.linalg.norm(u, axis=-1)
    _, b, c = so3_coeffs(theta)
    K = hat(u)
    return np.eye(3) + b[..., None, None] * K + c[..., None, None] * (K @ K)


def left_jacobian_inv_so3(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    theta = np.linalg.norm(u, axis=-1)
    series = theta < SERIES_ANGLE
    t = np.where(series, 1.0, theta)
    d = np.where(series, _poly(theta * theta, _JINV), 1.0 / t**2 - (1.0 + np.cos(t)) / (2.0 * t * np.sin(t)))
    K = hat(u)
    return np.eye(3) - 0.5 * K + d[..., None, None] * (K @ K)


def log_so3(R: np.ndarray) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    w = 0.5 * vee(R - np.swapaxes(R, -1, -2))
    s = np.linalg.norm(w, axis=-1)
    c = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    theta = np.arctan2(s, c)
    if np.any(theta > np.pi - ANTIPODAL_TOL):
        raise AntipodalRotationError("antipodal rotation: log_so3 undefined near angle pi")
    small = theta < SMALL_ANGLE
    t2 = theta * theta
    factor = np.where(
        small, 1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0, theta / np.where(small, 1.0, s)
    )
    return factor[..., None] * w


def project_so3(R: np.ndarray) -> np.ndarray:
    """Closest rotation in Frobenius norm (polar projection)."""
    U, _, Vt = np.linalg.svd(R)
    D = np.ones(3)
    D[-1] = np.sign(np.linalg.det(U @ Vt))
    return (U * D) @ Vt


@dataclass(frozen=True, eq=False)
class ExtendedPose:
    """Element of SE_2(3): attitude R, velocity slot v, position slot x."""

    R: np.ndarray
    v: np.ndarray
    x: np.ndarray

    @staticmethod
    def identity() -> "ExtendedPose":
        return ExtendedPose(np.eye(3), np.zeros(3), np.zeros(3))

    @staticmethod
    def from_matrix(M: np.ndarray) -> "ExtendedPose":
        return ExtendedPose(M[:3, :3].copy(), M[:3, 3].copy(), M[:3, 4].copy())

    def as_matrix(self) -> np.ndarray:
        M = np.eye(5)
        M[:3, :3] = self.R
        M[:3, 3] = self.v
        M[:3, 4] = self.x
        return M

    def __matmul__(self, other: "ExtendedPose") -> "ExtendedPose":
        return se23_compose(self, other)

    def inverse(self) -> "ExtendedPose":
        return se23_inverse(self)


def se23_compose(T1: ExtendedPose, T2: ExtendedPose) -> ExtendedPose:
    return ExtendedPose(T1.R @ T2.R, T1.v + T1.R @ T2.v, T1.x + T1.R @ T2.x)


def se23_inverse(T: ExtendedPose) -> ExtendedPose:
    Rt = T.R.T
    return ExtendedPose(Rt, -Rt @ T.v, -Rt @ T.x)


def se23_hat(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    M = np.zeros(u.shape[:-1] + (5, 5))
    M[..., :3, :3] = hat(u[..., 0:3])
    M[..., :3, 3] = u[..., 3:6]
    M[..., :3, 4] = u[..., 6:9]
    return M


def se23_vee(M: np.ndarray) -> np.ndarray:
    return np.concatenate([vee(M[..., :3, :3]), M[..., :3, 3], M[..., :3, 4]], axis=-1)


def exp_se23(u: np.ndarray) -> ExtendedPose:
    u = np.asarray(u, dtype=float)
    J = left_jacobian_so3(u[0:3])
    return ExtendedPose(exp_so3(u[0:3]), J @ u[3:6], J @ u[6:9])


def log_se23(T: ExtendedPose) -> np.ndarray:
    phi = log_so3(T.R)
    Jinv = left_jacobian_inv_so3(phi)
    return np.concatenate([phi, Jinv @ T.v, Jinv @ T.x])


def adjoint_se23(T: ExtendedPose) -> np.ndarray:
    """Ad_T with Ad_T u = vee(T hat(u) T^-1)."""
    Ad = np.zeros((9, 9))
    R = T.R
    Ad[0:3, 0:3] = R
    Ad[3:6, 3:6] = R
    Ad[6:9, 6:9] = R
    Ad[3:6, 0:3] = hat(T.v) @ R
    Ad[6:9, 0:3] = hat(T.x) @ R
    return Ad


def left_jacobian_se23(u: np.ndarray) -> np.ndarray:
    """Left Jacobian of SE_2(3) by series on ad_u; used for small-correction transports."""
    u = np.asarray(u, dtype=float)
    ad = np.zeros((9, 9))
    W = hat(u[0:3])
    ad[0:3, 0:3] = W
    ad[3:6, 3:6] = W
    ad[6:9, 6:9] = W
    ad[3:6, 0:3] = hat(u[3:6])
    ad[6:9, 0:3] = hat(u[6:9])
    out = np.eye(9)
    term = np.eye(9)
    for k in range(1, 20):
        term = term @ ad / (k + 1)
        out = out + term
    return out


@dataclass(frozen=True, eq=False)
class ScaledRot:
    """Element of SOT(3): rotation R and positive scale c, acting as p -> c^-1 R^T p."""

    R: np.ndarray
    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"SOT(3) scale must be positive, got {self.c}")

    @staticmethod
    def identity() -> "ScaledRot":
        return ScaledRot(np.eye(3), 1.0)

    def as_matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.R
        M[3, 3] = self.c
        return M

    def __matmul__(self, other: "ScaledRot") -> "ScaledRot":
        return sot3_compose(self, other)

    def inverse(self) -> "ScaledRot":
        return sot3_inverse(self)

    def act(self, p: np.ndarray) -> np.ndarray:
        return sot3_act(self, p)


def sot3_compose(Q1: ScaledRot, Q2: ScaledRot) -> ScaledRot:
    return ScaledRot(Q1.R @ Q2.R, Q1.c * Q2.c)


def sot3_inverse(Q: ScaledRot) -> ScaledRot:
    return ScaledRot(Q.R.T, 1.0 / Q.c)


def exp_sot3(u: np.ndarray) -> ScaledRot:
    u = np.asarray(u, dtype=float)
    return ScaledRot(exp_so3(u[0:3]), float(np.exp(u[3])))


def log_sot3(Q: ScaledRot) -> np.ndarray:
    return np.concatenate([log_so3(Q.R), [np.log(Q.c)]])


def sot3_act(Q: ScaledRot, p: np.ndarray) -> np.ndarray:
    return Q.R.T @ np.asarray(p, dtype=float) / Q.c


def adjoint_sot3(Q: ScaledRot) -> np.ndarray:
    Ad = np.eye(4)
    Ad[:3, :3] = Q.R
    return Ad


def rotation_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimal-angle rotation R with R a/|a| = b/|b| (batched over leading dims)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a = a / np.linalg.norm(a, axis=-1, keepdims=True)
    b = b / np.linalg.norm(b, axis=-1, keepdims=True)
    axis = np.cross(a, b)
    s = np.linalg.norm(axis, axis=-1)
    c = np.sum(a * b, axis=-1)
    angle = np.arctan2(s, c)
    if np.any(angle > np.pi - ANTIPODAL_TOL):
        raise AntipodalRotationError("rotation_between: vectors are antipodal")
    scale = np.where(s < 1e-15, 0.0, angle / np.where(s < 1e-15, 1.0, s))
    return exp_so3(axis * scale[..., None])
