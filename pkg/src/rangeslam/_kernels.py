"""Numba fast paths for the per-IMU-sample propagation of both filters.

They mirror ``EquivariantFilter.propagate_reference`` and
``RangeEKF.propagate_reference`` operation for operation; the test suite checks
that each pair agrees to round-off. Small products are written out by hand
because numba dispatches every ``@`` to BLAS, which dominates at 3x3.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_SMALL = 1e-6
_SERIES = 0.1  # same split as lie.SERIES_ANGLE


@njit(cache=True, inline="always")
def _mm3(A, B, out):
    for i in range(3):
        for j in range(3):
            out[i, j] = A[i, 0] * B[0, j] + A[i, 1] * B[1, j] + A[i, 2] * B[2, j]


@njit(cache=True, inline="always")
def _mmT3(A, B, out):
    """out = A @ B.T"""
    for i in range(3):
        for j in range(3):
            out[i, j] = A[i, 0] * B[j, 0] + A[i, 1] * B[j, 1] + A[i, 2] * B[j, 2]


@njit(cache=True, inline="always")
def _mv3(A, x, out):
    for i in range(3):
        out[i] = A[i, 0] * x[0] + A[i, 1] * x[1] + A[i, 2] * x[2]


@njit(cache=True, inline="always")
def _mtv3(A, x, out):
    """out = A.T @ x"""
    for i in range(3):
        out[i] = A[0, i] * x[0] + A[1, i] * x[1] + A[2, i] * x[2]


@njit(cache=True, inline="always")
def _cross(a, b, out):
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


@njit(cache=True, inline="always")
def _hat_into(u, K):
    K[0, 0] = 0.0
    K[0, 1] = -u[2]
    K[0, 2] = u[1]
    K[1, 0] = u[2]
    K[1, 1] = 0.0
    K[1, 2] = -u[0]
    K[2, 0] = -u[1]
    K[2, 1] = u[0]
    K[2, 2] = 0.0


@njit(cache=True)
def _series(u):
    """Coefficients of exp, J1 = sum K^k/(k+1)! and J2 = sum K^k/(k+2)!."""
    t2 = u[0] * u[0] + u[1] * u[1] + u[2] * u[2]
    if t2 < _SMALL * _SMALL:
        a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0
    else:
        t = math.sqrt(t2)
        a = math.sin(t) / t
    if t2 < _SERIES * _SERIES:
        b = 1 / 2 + t2 * (-1 / 24 + t2 * (1 / 720 + t2 * (-1 / 40320 + t2 / 3628800)))
        c = 1 / 6 + t2 * (-1 / 120 + t2 * (1 / 5040 + t2 * (-1 / 362880 + t2 / 39916800)))
        d = 1 / 24 + t2 * (-1 / 720 + t2 * (1 / 40320 + t2 * (-1 / 3628800 + t2 / 479001600)))
    else:
        t = math.sqrt(t2)
        s = math.sin(t)
        h = math.sin(0.5 * t)
        b = (1.0 - math.cos(t)) / t2
        c = (t - s) / (t2 * t)
        d = (0.5 * t2 - 2.0 * h * h) / (t2 * t2)
    return a, b, c, d


@njit(cache=True)
def _poly_into(u, c0, c1, c2, out):
    """out = c0 I + c1 K + c2 K^2 with K = u^."""
    x, y, z = u[0], u[1], u[2]
    out[0, 0] = c0 - c2 * (y * y + z * z)
    out[1, 1] = c0 - c2 * (x * x + z * z)
    out[2, 2] = c0 - c2 * (x * x + y * y)
    out[0, 1] = -c1 * z + c2 * x * y
    out[1, 0] = c1 * z + c2 * x * y
    out[0, 2] = c1 * y + c2 * x * z
    out[2, 0] = -c1 * y + c2 * x * z
    out[1, 2] = -c1 * x + c2 * y * z
    out[2, 1] = c1 * x + c2 * y * z


@njit(cache=True)
def _exp_into(u, out):
    a, b, _, _ = _series(u)
    _poly_into(u, 1.0, a, b, out)


@njit(cache=True)
def _rotation_between_into(a, b, out):
    """Smallest rotation taking direction a to direction b."""
    na = math.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])
    nb = math.sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2])
    ax = np.empty(3)
    ax[0] = (a[1] * b[2] - a[2] * b[1]) / (na * nb)
    ax[1] = (a[2] * b[0] - a[0] * b[2]) / (na * nb)
    ax[2] = (a[0] * b[1] - a[1] * b[0]) / (na * nb)
    s = math.sqrt(ax[0] * ax[0] + ax[1] * ax[1] + ax[2] * ax[2])
    c = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) / (na * nb)
    if s < 1e-15:
        for i in range(3):
            for j in range(3):
                out[i, j] = 1.0 if i == j else 0.0
        return
    ang = math.atan2(s, c)
    for i in range(3):
        ax[i] *= ang / s
    _exp_into(ax, out)


@njit(cache=True)
def _nav_flow(PR, Pv, Px, omega, accel, dt, g, PR_new, Pv_new, Px_new):
    u = omega * dt
    a, b, c, d = _series(u)
    E = np.empty((3, 3))
    J1 = np.empty((3, 3))
    J2 = np.empty((3, 3))
    _poly_into(u, 1.0, a, b, E)
    _poly_into(u, 1.0, b, c, J1)
    _poly_into(u, 0.5, c, d, J2)
    _mm3(PR, E, PR_new)
    t1 = np.empty(3)
    t2 = np.empty(3)
    w1 = np.empty(3)
    w2 = np.empty(3)
    _mv3(J1, accel, t1)
    _mv3(J2, accel, t2)
    _mv3(PR, t1, w1)
    _mv3(PR, t2, w2)
    for i in range(3):
        Pv_new[i] = Pv[i] + dt * w1[i]
        Px_new[i] = Px[i] + dt * Pv[i] + dt * dt * w2[i]
    Pv_new[2] += dt * g
    Px_new[2] += 0.5 * dt * dt * g


@njit(cache=True)
def _nav_input_rows(TR, Tv, Tx, B):
    """Ad_T restricted to (gyro, accel) written into rows 0:9 of B."""
    K = np.empty((3, 3))
    M = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            B[i, j] = TR[i, j]
            B[3 + i, 3 + j] = TR[i, j]
    _hat_into(Tv, K)
    _mm3(K, TR, M)
    for i in range(3):
        for j in range(3):
            B[3 + i, j] = M[i, j]
    _hat_into(Tx, K)
    _mm3(K, TR, M)
    for i in range(3):
        for j in range(3):
            B[6 + i, j] = M[i, j]


@njit(cache=True)
def _riccati(Sigma, A, B, Mdiag, dt):
    """Phi Sigma Phi^T + dt B M B^T with Phi = I + dt A + (dt A)^2 / 2, symmetrised."""
    d = A.shape[0]
    Adt = A * dt
    Phi = Adt @ Adt
    for i in range(d):
        for j in range(d):
            Phi[i, j] = 0.5 * Phi[i, j] + Adt[i, j]
        Phi[i, i] += 1.0
    S = Phi @ Sigma @ Phi.T
    BM = B * Mdiag
    Q = BM @ B.T
    for i in range(d):
        for j in range(i, d):
            v = 0.5 * (S[i, j] + S[j, i]) + dt * 0.5 * (Q[i, j] + Q[j, i])
            S[i, j] = v
            S[j, i] = v
    return S


@njit(cache=True)
def eqf_propagate(PR, Pv, Px, TR, Tv, Tx, QR, Qc, Sigma, A_nav, AdO_vel, omega, accel, dt, g, Mdiag, Ms):
    n = Qc.shape[0]
    d = 9 + 3 * n
    mu = np.empty(3)
    _mtv3(PR, Pv, mu)

    A = np.zeros((d, d))
    A[:9, :9] = A_nav
    B = np.zeros((d, 6))
    _nav_input_rows(TR, Tv, Tx, B)

    q = np.empty((n, 3))
    for i in range(n):
        for k in range(3):
            q[i, k] = QR[i, 2, k] / Qc[i]

    qxmu = np.empty(3)
    K = np.empty((3, 3))
    L = np.empty((3, 3))
    W = np.empty((3, 3))
    W2 = np.empty((3, 3))
    MsQ = np.empty((3, 3))
    for i in range(n):
        j = 9 + 3 * i
        qi = q[i]
        r2 = qi[0] * qi[0] + qi[1] * qi[1] + qi[2] * qi[2]
        # Ms (c R_Q)
        _mm3(Ms, QR[i], MsQ)
        for a in range(3):
            for b in range(3):
                MsQ[a, b] *= Qc[i]
        # A_qv = -Ms (c R_Q) R^T Ad_origin[3:6]
        _mmT3(MsQ, PR, W)
        for a in range(3):
            for b in range(9):
                A[j + a, b] = -(W[a, 0] * AdO_vel[0, b] + W[a, 1] * AdO_vel[1, b] + W[a, 2] * AdO_vel[2, b])
        # A_qq = Ms R_Q L R_Q^T Ms^T with L = ((q x mu)^ + (q . mu) I) / |q|^2
        _cross(qi, mu, qxmu)
        _hat_into(qxmu, L)
        qm = qi[0] * mu[0] + qi[1] * mu[1] + qi[2] * mu[2]
        for a in range(3):
            L[a, a] += qm
            for b in range(3):
                L[a, b] /= r2
        _mm3(Ms, QR[i], W)
        _mm3(W, L, W2)
        _mmT3(W2, W, L)
        for a in range(3):
            for b in range(3):
                A[j + a, j + b] = L[a, b]
        # B_q = Ms (c R_Q) q^
        _hat_into(qi, K)
        _mm3(MsQ, K, W)
        for a in range(3):
            for b in range(3):
                B[j + a, b] = W[a, b]

    PR_new = np.empty((3, 3))
    Pv_new = np.empty(3)
    Px_new = np.empty(3)
    _nav_flow(PR, Pv, Px, omega, accel, dt, g, PR_new, Pv_new, Px_new)

    QR_new = np.empty_like(QR)
    Qc_new = np.empty_like(Qc)
    dx = Px - Px_new
    world = np.empty(3)
    q_new = np.empty(3)
    w = np.empty(3)
    d1 = np.empty(3)
    R1 = np.empty((3, 3))
    Rc = np.empty((3, 3))
    for i in range(n):
        qi = q[i]
        r2 = qi[0] * qi[0] + qi[1] * qi[1] + qi[2] * qi[2]
        _mv3(PR, qi, world)
        for k in range(3):
            world[k] += dx[k]
        _mtv3(PR_new, world, q_new)
        _cross(qi, mu, qxmu)
        for k in range(3):
            w[k] = (omega[k] + qxmu[k] / r2) * dt
        _exp_into(w, R1)
        _mtv3(R1, qi, d1)
        _rotation_between_into(d1, q_new, Rc)
        _mm3(QR[i], R1, W)
        _mmT3(W, Rc, QR_new[i])
        Qc_new[i] = Qc[i] * math.sqrt(r2 / (q_new[0] ** 2 + q_new[1] ** 2 + q_new[2] ** 2))

    S = _riccati(Sigma, A, B, Mdiag, dt)
    return PR_new, Pv_new, Px_new, QR_new, Qc_new, S


@njit(cache=True)
def ekf_propagate(PR, Pv, Px, Sigma, A_nav, omega, accel, dt, g, Mdiag):
    """Navigation flow plus a Riccati step whose landmark rows of A and B vanish."""
    d = Sigma.shape[0]
    B = np.zeros((9, 6))
    _nav_input_rows(PR, Pv, Px, B)
    PR_new = np.empty((3, 3))
    Pv_new = np.empty(3)
    Px_new = np.empty(3)
    _nav_flow(PR, Pv, Px, omega, accel, dt, g, PR_new, Pv_new, Px_new)

    Adt = A_nav * dt
    Phi = Adt @ Adt
    for i in range(9):
        for j in range(9):
            Phi[i, j] = 0.5 * Phi[i, j] + Adt[i, j]
        Phi[i, i] += 1.0
    S = Sigma.copy()
    S[:9, :9] = Phi @ np.ascontiguousarray(Sigma[:9, :9]) @ Phi.T + dt * ((B * Mdiag) @ B.T)
    if d > 9:
        cross = Phi @ np.ascontiguousarray(Sigma[:9, 9:])
        S[:9, 9:] = cross
        S[9:, :9] = cross.T
    for i in range(d):
        for j in range(i + 1, d):
            v = 0.5 * (S[i, j] + S[j, i])
            S[i, j] = v
            S[j, i] = v
    return PR_new, Pv_new, Px_new, S
