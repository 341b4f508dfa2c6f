"""Baseline EKF: SE_2(3) navigation error shared with the EqF, Euclidean world-frame landmarks."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._kernels import ekf_propagate
from .eqf import FilterError, _check_finite
from .inertial import nav_flow, nav_input_matrix, nav_reset_jacobian, nav_state_matrix
from .lie import ExtendedPose, exp_se23, hat, project_so3
from .symmetry import E3, GRAVITY

# initial landmark covariance profiles, m^2 per axis
LANDMARK_PROFILES = {"aerial": 50.0, "ground": 10.0}
RENORMALIZE_EVERY = 1000


@dataclass(frozen=True)
class EkfNoise:
    gyro_psd: float = 6.76e-8
    accel_psd: float = 2.89e-6
    range_var: float = 4.0  # m^2
    sigma0_nav: tuple = (1e-4,) * 3 + (1e-2,) * 3 + (1e-2,) * 3
    sigma0_lm: tuple = (50.0, 50.0, 50.0)  # m^2

    @property
    def M(self) -> np.ndarray:
        return np.diag([self.gyro_psd] * 3 + [self.accel_psd] * 3)

    @classmethod
    def with_profile(cls, profile: str, **kw) -> "EkfNoise":
        s = LANDMARK_PROFILES[profile]
        return cls(sigma0_lm=(s, s, s), **kw)


@dataclass(frozen=True, eq=False)
class EkfBelief:
    pose: ExtendedPose
    p: np.ndarray  # (n, 3) world-frame landmarks
    Sigma: np.ndarray
    ids: tuple = ()
    steps: int = 0

    @property
    def n(self) -> int:
        return len(self.ids)

    def index(self, landmark_id: int) -> int:
        try:
            return self.ids.index(landmark_id)
        except ValueError:
            raise KeyError(f"landmark {landmark_id} is not in the state") from None


@dataclass
class RangeEKF:
    noise: EkfNoise = field(default_factory=EkfNoise)
    gravity: float = GRAVITY
    reset_mode: str = "numerical_transport"
    gate: float | None = None
    fd_step: float = 1e-6
    fast: bool = True

    def __post_init__(self):
        self._A_nav = nav_state_matrix(ExtendedPose.identity(), self.gravity)
        self._Mdiag = np.diag(self.noise.M).copy()

    def initial_belief(self, pose: ExtendedPose | None = None) -> EkfBelief:
        pose = pose or ExtendedPose.identity()
        return EkfBelief(pose, np.zeros((0, 3)), np.diag(np.asarray(self.noise.sigma0_nav, dtype=float)))

    def add_landmark(self, b: EkfBelief, landmark_id: int, first_range: float, p_init=None) -> EkfBelief:
        if landmark_id in b.ids:
            raise ValueError(f"landmark {landmark_id} already initialised")
        if p_init is None:
            if not first_range > 0:
                raise ValueError("first range must be positive")
            p_init = b.pose.x + b.pose.R @ (first_range * E3)
        d = b.Sigma.shape[0]
        Sigma = np.zeros((d + 3, d + 3))
        Sigma[:d, :d] = b.Sigma
        Sigma[d:, d:] = np.diag(np.asarray(self.noise.sigma0_lm, dtype=float))
        p = np.vstack([b.p, np.asarray(p_init, dtype=float)[None]])
        return EkfBelief(b.pose, p, Sigma, b.ids + (landmark_id,), b.steps)

    def pose_estimate(self, b: EkfBelief) -> ExtendedPose:
        return b.pose

    def world_landmarks(self, b: EkfBelief) -> np.ndarray:
        return b.p.copy()

    def predicted_ranges(self, b: EkfBelief) -> np.ndarray:
        return np.linalg.norm(b.p - b.pose.x, axis=1)

    def mat_A(self, b: EkfBelief) -> np.ndarray:
        A = np.zeros((9 + 3 * b.n,) * 2)
        A[:9, :9] = self._A_nav
        return A

    def mat_B(self, b: EkfBelief) -> np.ndarray:
        B = np.zeros((9 + 3 * b.n, 6))
        B[:9] = nav_input_matrix(b.pose)
        return B

    def mat_H(self, b: EkfBelief, ids) -> np.ndarray:
        """Range Jacobian with respect to (world-frame nav error, landmark positions)."""
        H = np.zeros((len(ids), 9 + 3 * b.n))
        x = b.pose.x
        Xhat = hat(x)
        for row, lid in enumerate(ids):
            i = b.index(lid)
            diff = b.p[i] - x
            d = diff / np.linalg.norm(diff)
            # x(eta) ~ x_hat - x_hat^ phi + rho
            H[row, 0:3] = d @ Xhat
            H[row, 6:9] = -d
            H[row, 9 + 3 * i : 12 + 3 * i] = d
        return H

    def propagate(self, b: EkfBelief, omega, accel, dt: float) -> EkfBelief:
        omega = np.asarray(omega, dtype=float)
        accel = np.asarray(accel, dtype=float)
        _check_finite(omega, accel)
        if not dt > 0:
            raise ValueError("dt must be positive")
        if not self.fast:
            return self.propagate_reference(b, omega, accel, dt)
        P = b.pose
        R, v, x, Sigma = ekf_propagate(P.R, P.v, P.x, b.Sigma, self._A_nav, omega, accel, float(dt), self.gravity, self._Mdiag)
        steps = b.steps + 1
        if steps % RENORMALIZE_EVERY == 0:
            R = project_so3(R)
        return EkfBelief(ExtendedPose(R, v, x), b.p, Sigma, b.ids, steps)

    def propagate_reference(self, b: EkfBelief, omega, accel, dt: float) -> EkfBelief:
        """Plain numpy version of ``propagate``."""
        A = self.mat_A(b)
        B = self.mat_B(b)
        pose = nav_flow(b.pose, omega, accel, dt, self.gravity)
        steps = b.steps + 1
        if steps % RENORMALIZE_EVERY == 0:
            pose = ExtendedPose(project_so3(pose.R), pose.v, pose.x)
        Adt = A * dt
        Phi = np.eye(A.shape[0]) + Adt + 0.5 * Adt @ Adt
        Sigma = Phi @ b.Sigma @ Phi.T + dt * (B @ self.noise.M @ B.T)
        return EkfBelief(pose, b.p, 0.5 * (Sigma + Sigma.T), b.ids, steps)

    def update(self, b: EkfBelief, ids, ranges) -> EkfBelief:
        ids = list(ids)
        ranges = np.asarray(ranges, dtype=float)
        if not ids:
            return b
        _check_finite(ranges)
        if np.any(ranges <= 0):
            raise ValueError("ranges must be positive")
        idx = [b.index(i) for i in ids]
        residual = ranges - self.predicted_ranges(b)[idx]
        H = self.mat_H(b, ids)
        S = H @ b.Sigma @ H.T + self.noise.range_var * np.eye(len(ids))
        if self.gate is not None:
            keep = residual**2 / np.diag(S) <= self.gate
            if not np.all(keep):
                ids = [i for i, k in zip(ids, keep) if k]
                return self.update(b, ids, ranges[keep]) if ids else b
        try:
            K = np.linalg.solve(S, H @ b.Sigma).T
        except np.linalg.LinAlgError as exc:
            raise FilterError("singular innovation covariance") from exc
        delta = K @ residual
        Sigma = (np.eye(b.Sigma.shape[0]) - K @ H) @ b.Sigma
        Sigma = 0.5 * (Sigma + Sigma.T)
        if not np.any(delta):
            return replace(b, Sigma=Sigma)
        pose = exp_se23(delta[:9]) @ b.pose
        p = b.p + delta[9:].reshape(-1, 3)
        if self.reset_mode != "none":
            J = np.eye(len(delta))
            J[:9, :9] = nav_reset_jacobian(delta[:9], self.fd_step)
            Sigma = J @ Sigma @ J.T
            Sigma = 0.5 * (Sigma + Sigma.T)
        return EkfBelief(pose, p, Sigma, b.ids, b.steps)
