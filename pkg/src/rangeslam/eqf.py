"""Equivariant filter for range-only SLAM.

The observer state lives on SE_2(3) x SOT(3)^n and the Riccati matrix in the
normal coordinates about the origin (nav 9 first, then 3 per landmark in
insertion order). All operations are pure: they return a new belief.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._kernels import eqf_propagate
from .inertial import nav_flow, nav_input_matrix, nav_reset_jacobian, nav_state_matrix
from .lie import ExtendedPose, adjoint_se23, exp_so3, hat, project_so3, rotation_between
from .symmetry import (
    DSIGMA,
    DSIGMA_INV,
    GRAVITY,
    AlgebraElement,
    Origin,
    SlamState,
    SymmetryElement,
    correction_from_coords,
    exp_group,
    lift,
    sigma_sot3,
    sigma_sot3_inv,
    state_action,
)

RESET_MODES = ("none", "numerical_transport")
RENORMALIZE_EVERY = 1000


class FilterError(RuntimeError):
    pass


@dataclass(frozen=True)
class NoiseConfig:
    """Filter gains. PSDs are continuous-time; ``range_var`` is per measurement."""

    gyro_psd: float = 6.76e-8  # (rad/s)^2 / Hz
    accel_psd: float = 2.89e-6  # (m/s^2)^2 / Hz
    range_var: float = 4.0  # m^2, output gain; inflated over the 0.0625 m^2 sensor variance
    sigma0_nav: tuple = (1e-4,) * 3 + (1e-2,) * 3 + (1e-2,) * 3  # rad^2, (m/s)^2, m^2
    sigma0_lm: tuple = (3.0, 3.0, 3.0)  # rad^2, rad^2, log(m)^2

    @property
    def M(self) -> np.ndarray:
        return np.diag([self.gyro_psd] * 3 + [self.accel_psd] * 3)


@dataclass(frozen=True, eq=False)
class FilterBelief:
    X: SymmetryElement
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


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise FilterError("non-finite input")


def _landmark_est(X: SymmetryElement) -> np.ndarray:
    # q_hat_i = Q_i^-1 e3 = c_i^-1 R_i^T e3 (third row of R_i)
    return X.QR[:, 2, :] / X.Qc[:, None]


@dataclass
class EquivariantFilter:
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    origin: Origin = field(default_factory=Origin)
    gravity: float = GRAVITY
    reset_mode: str = "numerical_transport"
    gate: float | None = None  # chi-square threshold on the normalized innovation, off if None
    fd_step: float = 1e-6
    fast: bool = True  # use the compiled propagation kernel

    def __post_init__(self):
        if self.reset_mode not in RESET_MODES:
            raise ValueError(f"reset_mode must be one of {RESET_MODES}")
        self._A_nav = nav_state_matrix(self.origin.pose, self.gravity)
        self._Ad_origin = adjoint_se23(self.origin.pose)
        self._AdO_vel = np.ascontiguousarray(self._Ad_origin[3:6, :])
        self._origin_inv = self.origin.pose.inverse()
        self._Mdiag = np.diag(self.noise.M).copy()
        o = self.origin.pose
        self._origin_is_identity = bool(
            np.array_equal(o.R, np.eye(3)) and not np.any(o.v) and not np.any(o.x)
        )

    # -- construction ---------------------------------------------------
    def initial_belief(self, pose: ExtendedPose | None = None) -> FilterBelief:
        pose = pose or self.origin.pose
        T = self.origin.pose.inverse() @ pose
        X = SymmetryElement(T, np.zeros((0, 3, 3)), np.zeros(0))
        return FilterBelief(X, np.diag(np.asarray(self.noise.sigma0_nav, dtype=float)))

    def add_landmark(self, b: FilterBelief, landmark_id: int, first_range: float, q_init=None) -> FilterBelief:
        """Append a landmark at ``first_range * e3`` in the body frame (or at ``q_init``)."""
        if landmark_id in b.ids:
            raise ValueError(f"landmark {landmark_id} already initialised")
        if q_init is None:
            if not first_range > 0:
                raise ValueError("first range must be positive")
            R_new, c_new = np.eye(3), 1.0 / first_range
        else:
            q_init = np.asarray(q_init, dtype=float)
            # Q^-1 e3 = q  <=>  R^T e3 = q / |q|, c = 1 / |q|
            R_new = rotation_between(q_init, np.array([0.0, 0.0, 1.0]))
            c_new = 1.0 / np.linalg.norm(q_init)
        X = SymmetryElement(b.X.T, np.concatenate([b.X.QR, R_new[None]]), np.append(b.X.Qc, c_new))
        d = b.Sigma.shape[0]
        Sigma = np.zeros((d + 3, d + 3))
        Sigma[:d, :d] = b.Sigma
        Sigma[d:, d:] = np.diag(np.asarray(self.noise.sigma0_lm, dtype=float))
        return FilterBelief(X, Sigma, b.ids + (landmark_id,), b.steps)

    # -- estimates --------------------------------------------------------
    def state_estimate(self, b: FilterBelief) -> SlamState:
        return state_action(b.X, self.origin.state(b.n))

    def pose_estimate(self, b: FilterBelief) -> ExtendedPose:
        return self.origin.pose @ b.X.T

    def world_landmarks(self, b: FilterBelief) -> np.ndarray:
        P = self.pose_estimate(b)
        return _landmark_est(b.X) @ P.R.T + P.x

    def predicted_ranges(self, b: FilterBelief) -> np.ndarray:
        return 1.0 / b.X.Qc

    def lift(self, b: FilterBelief, omega, accel) -> AlgebraElement:
        return lift(self.state_estimate(b), omega, accel, self.gravity)

    # -- linearisation ----------------------------------------------------
    def mat_A(self, b: FilterBelief, omega=None, accel=None) -> np.ndarray:
        """State matrix; the input enters only through the (input-free) lift structure."""
        n = b.n
        A = np.zeros((9 + 3 * n, 9 + 3 * n))
        A[:9, :9] = self._A_nav
        if n == 0:
            return A
        P = self.pose_estimate(b)
        q = _landmark_est(b.X)
        mu = P.R.T @ P.v
        r2 = np.sum(q * q, axis=1)
        QR = b.X.QR
        # landmark velocity coupling: -Dsigma Q_i R^T, then map vel error from eps to world frame
        Avq = -np.einsum("ij,njk,kl->nil", DSIGMA, QR * b.X.Qc[:, None, None], P.R.T)
        Avq = Avq @ self._Ad_origin[3:6, :]
        L = (hat(np.cross(q, mu)) + (q @ mu)[:, None, None] * np.eye(3)) / r2[:, None, None]
        Aqq = DSIGMA @ (QR @ L @ np.swapaxes(QR, 1, 2)) @ DSIGMA_INV
        for i in range(n):
            j = 9 + 3 * i
            A[j : j + 3, :9] = Avq[i]
            A[j : j + 3, j : j + 3] = Aqq[i]
        return A

    def mat_B(self, b: FilterBelief) -> np.ndarray:
        n = b.n
        B = np.zeros((9 + 3 * n, 6))
        B[:9] = nav_input_matrix(b.X.T)
        if n:
            q = _landmark_est(b.X)
            Bq = DSIGMA @ (b.X.QR * b.X.Qc[:, None, None]) @ hat(q)
            B[9:, :3] = Bq.reshape(-1, 3)
        return B

    def mat_Cstar(self, b: FilterBelief, ids, ranges) -> np.ndarray:
        ranges = np.asarray(ranges, dtype=float)
        yhat = self.predicted_ranges(b)
        C = np.zeros((len(ids), 9 + 3 * b.n))
        for row, (lid, y) in enumerate(zip(ids, ranges)):
            i = b.index(lid)
            C[row, 9 + 3 * i + 2] = -0.5 * (y + yhat[i])
        return C

    # -- propagation ------------------------------------------------------
    def propagate(self, b: FilterBelief, omega, accel, dt: float) -> FilterBelief:
        """Advance the observer and Riccati matrix over dt with constant IMU input.

        The observer moves along the exact constant-input flow: the pose by the
        closed-form SE_2(3) flow and each landmark so that its estimate follows
        q_dot = -omega^ q - R^T v, with the gauge about q taken from the lift.
        """
        omega = np.asarray(omega, dtype=float)
        accel = np.asarray(accel, dtype=float)
        _check_finite(omega, accel)
        if not dt > 0:
            raise ValueError("dt must be positive")
        if not self.fast:
            return self.propagate_reference(b, omega, accel, dt)
        X = b.X
        T = X.T
        P = T if self._origin_is_identity else self.origin.pose @ T
        PR, Pv, Px, QR, Qc, Sigma = eqf_propagate(
            P.R, P.v, P.x, T.R, T.v, T.x, X.QR, X.Qc, b.Sigma, self._A_nav,
            self._AdO_vel, omega, accel, float(dt), self.gravity, self._Mdiag, DSIGMA,
        )
        P_new = ExtendedPose(PR, Pv, Px)
        T_new = P_new if self._origin_is_identity else self._origin_inv @ P_new
        steps = b.steps + 1
        if steps % RENORMALIZE_EVERY == 0:
            T_new = ExtendedPose(project_so3(T_new.R), T_new.v, T_new.x)
            QR = np.array([project_so3(R) for R in QR]).reshape(-1, 3, 3)
        return FilterBelief(SymmetryElement(T_new, QR, Qc), Sigma, b.ids, steps)

    def propagate_reference(self, b: FilterBelief, omega, accel, dt: float) -> FilterBelief:
        """Plain numpy version of ``propagate``."""
        A = self.mat_A(b)
        B = self.mat_B(b)

        P = self.pose_estimate(b)
        P_new = nav_flow(P, omega, accel, dt, self.gravity)
        T_new = self.origin.pose.inverse() @ P_new
        QR, Qc = b.X.QR, b.X.Qc
        if b.n:
            q = _landmark_est(b.X)
            q_new = (q @ P.R.T + (P.x - P_new.x)) @ P_new.R
            mu = P.R.T @ P.v
            r2 = np.sum(q * q, axis=1)
            w = omega + np.cross(q, mu) / r2[:, None]
            R1 = exp_so3(w * dt)
            d1 = np.einsum("nji,nj->ni", R1, q)
            Rc = rotation_between(d1, q_new)
            QR = QR @ R1 @ np.swapaxes(Rc, 1, 2)
            Qc = Qc * np.sqrt(r2) / np.linalg.norm(q_new, axis=1)

        steps = b.steps + 1
        if steps % RENORMALIZE_EVERY == 0:
            T_new = ExtendedPose(project_so3(T_new.R), T_new.v, T_new.x)
            QR = np.array([project_so3(R) for R in QR]).reshape(-1, 3, 3)

        Adt = A * dt
        Phi = np.eye(A.shape[0]) + Adt + 0.5 * Adt @ Adt
        Sigma = Phi @ b.Sigma @ Phi.T + dt * (B @ self.noise.M @ B.T)
        Sigma = 0.5 * (Sigma + Sigma.T)
        return FilterBelief(SymmetryElement(T_new, QR, Qc), Sigma, b.ids, steps)

    # -- update -----------------------------------------------------------
    def update(self, b: FilterBelief, ids, ranges) -> FilterBelief:
        """Fuse one epoch of range measurements to already-initialised landmarks."""
        ids = list(ids)
        ranges = np.asarray(ranges, dtype=float)
        if len(ids) == 0:
            return b
        _check_finite(ranges)
        if np.any(ranges <= 0):
            raise ValueError("ranges must be positive")
        yhat = self.predicted_ranges(b)[[b.index(i) for i in ids]]
        C = self.mat_Cstar(b, ids, ranges)
        residual = ranges - yhat
        N = self.noise.range_var * np.eye(len(ids))
        S = C @ b.Sigma @ C.T + N
        if self.gate is not None:
            d2 = residual**2 / np.diag(S)
            keep = d2 <= self.gate
            if not np.all(keep):
                ids = [i for i, k in zip(ids, keep) if k]
                return self.update(b, ids, ranges[keep]) if ids else b
        try:
            K = np.linalg.solve(S, C @ b.Sigma).T
        except np.linalg.LinAlgError as exc:
            raise FilterError("singular innovation covariance") from exc
        delta = K @ residual
        I_KC = np.eye(b.Sigma.shape[0]) - K @ C
        Sigma = I_KC @ b.Sigma
        Sigma = 0.5 * (Sigma + Sigma.T)
        if not np.any(delta):
            return replace(b, Sigma=Sigma)
        Delta = correction_from_coords(delta)
        X = exp_group(Delta) @ b.X
        return self.reset(FilterBelief(X, Sigma, b.ids, b.steps), delta)

    def reset(self, b: FilterBelief, delta: np.ndarray) -> FilterBelief:
        """Transport Sigma through the re-centring of the error coordinates."""
        if self.reset_mode == "none" or not np.any(delta):
            return b
        J = self.reset_jacobian(delta)
        Sigma = J @ b.Sigma @ J.T
        return replace(b, Sigma=0.5 * (Sigma + Sigma.T))

    def reset_jacobian(self, delta: np.ndarray) -> np.ndarray:
        """Block-diagonal Jacobian of eps -> theta(phi(exp(Delta)^-1, theta^-1(eps))) at eps = delta."""
        delta = np.asarray(delta, dtype=float)
        d = len(delta)
        J = np.zeros((d, d))
        J[:9, :9] = nav_reset_jacobian(delta[:9], self.fd_step)
        if d > 9:
            lm = delta[9:].reshape(-1, 3)
            Delta = correction_from_coords(delta).lm
            R = exp_so3(Delta[:, :3])
            c = np.exp(Delta[:, 3])

            def f(eps):
                q = sigma_sot3_inv(eps)
                return sigma_sot3(c[:, None] * np.einsum("nij,nj->ni", R, q))

            h = self.fd_step
            for k in range(3):
                e = np.zeros(3)
                e[k] = h
                col = (f(lm + e) - f(lm - e)) / (2 * h)
                for i in range(len(lm)):
                    J[9 + 3 * i : 12 + 3 * i, 9 + 3 * i + k] = col[i]
        return J
