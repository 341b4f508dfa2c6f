"""Inertial navigation pieces shared by the EqF and the EKF baseline.

Navigation errors are the SE_2(3) logarithm of ``P_origin^-1 P P_hat^-1 P_origin``;
with the default identity origin this is the world-frame (left-invariant) error.
"""

from __future__ import annotations

import numpy as np

from .lie import (
    ExtendedPose,
    adjoint_se23,
    exp_se23,
    exp_so3,
    hat,
    j2_coeff,
    left_jacobian_inv_so3,
    left_jacobian_so3,
    log_so3,
    so3_coeffs,
)
from .symmetry import E3, GRAVITY


def _j2(u: np.ndarray) -> np.ndarray:
    """sum_k (u^)^k / (k+2)!"""
    theta = float(np.linalg.norm(u))
    K = hat(u)
    _, _, b = so3_coeffs(theta)
    return 0.5 * np.eye(3) + b * K + float(j2_coeff(theta)) * (K @ K)


def nav_flow(pose: ExtendedPose, omega, accel, dt: float, g: float = GRAVITY) -> ExtendedPose:
    """Exact flow over dt for constant (omega, accel): exp(dt(G-D)) P exp(dt(U+D))."""
    omega = np.asarray(omega, dtype=float)
    accel = np.asarray(accel, dtype=float)
    wdt = omega * dt
    R = pose.R
    J1 = left_jacobian_so3(wdt)
    J2 = _j2(wdt)
    ge3 = g * E3
    R_new = R @ exp_so3(wdt)
    v_new = pose.v + dt * (R @ (J1 @ accel)) + dt * ge3
    x_new = pose.x + dt * pose.v + dt * dt * (R @ (J2 @ accel)) + 0.5 * dt * dt * ge3
    return ExtendedPose(R_new, v_new, x_new)


def nav_state_matrix(origin_pose: ExtendedPose, g: float = GRAVITY) -> np.ndarray:
    """9x9 error-state matrix; constant because the navigation system is group affine."""
    A = np.zeros((9, 9))
    A[3:6, 0:3] = hat(g * E3)
    A[6:9, 3:6] = np.eye(3)
    Ad = adjoint_se23(origin_pose)
    return np.linalg.solve(Ad, A @ Ad)


def nav_input_matrix(T_hat: ExtendedPose) -> np.ndarray:
    """9x6 input matrix Ad_{T_hat} restricted to (gyro, accel) inputs."""
    return adjoint_se23(T_hat)[:, :6]


def nav_reset_jacobian(delta_nav: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of eps -> log(exp(eps) exp(-delta)) at eps = delta."""
    delta_nav = np.asarray(delta_nav, dtype=float)
    inv = exp_se23(-delta_nav)
    E = step * np.eye(9)
    u = np.concatenate([delta_nav + E, delta_nav - E])
    # batched exp(u) @ inv followed by batched log, all 18 perturbations at once
    Jl = left_jacobian_so3(u[:, 0:3])
    R = exp_so3(u[:, 0:3])
    v = np.einsum("nij,nj->ni", Jl, u[:, 3:6])
    x = np.einsum("nij,nj->ni", Jl, u[:, 6:9])
    Rp = R @ inv.R
    vp = v + R @ inv.v
    xp = x + R @ inv.x
    phi = log_so3(Rp)
    Jinv = left_jacobian_inv_so3(phi)
    logs = np.concatenate(
        [phi, np.einsum("nij,nj->ni", Jinv, vp), np.einsum("nij,nj->ni", Jinv, xp)], axis=1
    )
    return ((logs[:9] - logs[9:]) / (2 * step)).T
