"""Independent numerical oracles shared by the test modules."""

import numpy as np

from rangeslam.lie import ExtendedPose, exp_so3
from rangeslam.symmetry import (
    E3,
    SlamState,
    SymmetryElement,
    exp_group,
    lift,
    state_action,
    theta,
    theta_inv,
)


def random_rotation(rng, scale=np.pi / 2):
    return exp_so3(rng.uniform(-1, 1, 3) * scale)


def random_pose(rng, scale=3.0):
    return ExtendedPose(random_rotation(rng), rng.normal(size=3) * scale, rng.normal(size=3) * scale)


def random_group(rng, n):
    QR = np.array([random_rotation(rng) for _ in range(n)]).reshape(n, 3, 3)
    return SymmetryElement(random_pose(rng), QR, np.exp(rng.normal(size=n) * 0.5))


def random_state(rng, n, rmin=0.5):
    q = rng.normal(size=(n, 3)) * 5
    norms = np.linalg.norm(q, axis=1, keepdims=True)
    q = np.where(norms < rmin, q / norms * rmin, q)
    return SlamState(random_pose(rng), q)


def random_chart_state(rng, n, origin_pose, spread=0.6):
    """A state inside the normal-coordinate chart, built without using theta_inv."""
    pose = origin_pose @ ExtendedPose(random_rotation(rng, spread), rng.normal(size=3), rng.normal(size=3))
    d = rng.normal(size=(n, 3))
    d[:, 2] = np.abs(d[:, 2]) + 0.2
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return SlamState(pose, d * np.exp(rng.normal(size=(n, 1))))


def euler_flow(xi, omega, accel, tau, g):
    """First-order flow of the true dynamics (exact rotation increment)."""
    R, v, x = xi.pose.R, xi.pose.v, xi.pose.x
    vdot = R @ accel + g * E3
    qdot = -np.cross(omega, xi.q) - R.T @ v
    pose = ExtendedPose(R @ exp_so3(omega * tau), v + tau * vdot, x + tau * v)
    return SlamState(pose, xi.q + tau * qdot)


def error_rate(filt, belief, eps, u_true, u_filter, tau=1e-4):
    """d/dt of eps = theta(phi(X^-1, xi)) along the true and observer flows."""
    origin = filt.origin
    X = belief.X
    xi = state_action(X, theta_inv(eps, origin))
    xi_hat = state_action(X, origin.state(X.n))
    Lam = lift(xi_hat, u_filter[:3], u_filter[3:], filt.gravity)
    out = []
    for s in (tau, -tau):
        Xs = X @ exp_group(Lam * s)
        xis = euler_flow(xi, u_true[:3], u_true[3:], s, filt.gravity)
        out.append(theta(state_action(Xs.inverse(), xis), origin))
    return (out[0] - out[1]) / (2 * tau)


def fd_state_matrix(filt, belief, u, h=1e-4):
    d = belief.Sigma.shape[0]
    A = np.zeros((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        A[:, j] = (error_rate(filt, belief, e, u, u) - error_rate(filt, belief, -e, u, u)) / (2 * h)
    return A


def fd_input_matrix(filt, belief, u, h=1e-4):
    d = belief.Sigma.shape[0]
    B = np.zeros((d, 6))
    zero = np.zeros(d)
    for j in range(6):
        e = np.zeros(6)
        e[j] = h
        B[:, j] = (error_rate(filt, belief, zero, u + e, u) - error_rate(filt, belief, zero, u - e, u)) / (2 * h)
    return B


def expm_series(M, terms=30):
    out = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, terms):
        term = term @ M / k
        out = out + term
    return out


def _group_blocks(X):
    return [X.T.as_matrix()] + [Q.as_matrix() for Q in X.lm]


def _blocks_to_group(blocks):
    from rangeslam.symmetry import SymmetryElement

    T = ExtendedPose.from_matrix(blocks[0])
    QR = np.array([B[:3, :3] for B in blocks[1:]]).reshape(-1, 3, 3)
    Qc = np.array([B[3, 3] for B in blocks[1:]])
    return SymmetryElement(T, QR, Qc)


def _algebra_blocks(u):
    from rangeslam.lie import hat, se23_hat

    out = [se23_hat(u.nav)]
    for w in np.asarray(u.lm).reshape(-1, 4):
        M = np.zeros((4, 4))
        M[:3, :3] = hat(w[:3])
        M[3, 3] = w[3]
        out.append(M)
    return out


def rk4_observer(filt, belief, omega, accel, dt, substeps=100):
    """RK4 on the matrix embedding of X_dot = X Lambda(phi(X, origin), u) and the Riccati ODE."""
    from rangeslam.eqf import FilterBelief

    M = filt.noise.M

    def rates(blocks, S):
        X = _blocks_to_group(blocks)
        b = FilterBelief(X, S, belief.ids)
        xi = state_action(X, filt.origin.state(X.n))
        Lam = lift(xi, omega, accel, filt.gravity)
        dX = [Xb @ L for Xb, L in zip(blocks, _algebra_blocks(Lam))]
        A, B = filt.mat_A(b), filt.mat_B(b)
        dS = A @ S + S @ A.T + B @ M @ B.T
        return dX, dS

    blocks = _group_blocks(belief.X)
    S = belief.Sigma.copy()
    h = dt / substeps
    for _ in range(substeps):
        k1 = rates(blocks, S)
        k2 = rates([b + 0.5 * h * d for b, d in zip(blocks, k1[0])], S + 0.5 * h * k1[1])
        k3 = rates([b + 0.5 * h * d for b, d in zip(blocks, k2[0])], S + 0.5 * h * k2[1])
        k4 = rates([b + h * d for b, d in zip(blocks, k3[0])], S + h * k3[1])
        blocks = [
            b + h / 6 * (d1 + 2 * d2 + 2 * d3 + d4)
            for b, d1, d2, d3, d4 in zip(blocks, k1[0], k2[0], k3[0], k4[0])
        ]
        S = S + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return FilterBelief(_blocks_to_group(blocks), S, belief.ids)


def rk4_truth(xi, omega, accel, dt, g, substeps=100):
    """RK4 of the body-frame system dynamics in the embedding (R, v, x, q)."""
    from rangeslam.symmetry import system_dynamics

    R, v, x, q = xi.pose.R.copy(), xi.pose.v.copy(), xi.pose.x.copy(), xi.q.copy()

    def f(R, v, x, q):
        return system_dynamics(SlamState(ExtendedPose(R, v, x), q), omega, accel, g)

    h = dt / substeps
    for _ in range(substeps):
        k1 = f(R, v, x, q)
        k2 = f(*(s + 0.5 * h * d for s, d in zip((R, v, x, q), k1)))
        k3 = f(*(s + 0.5 * h * d for s, d in zip((R, v, x, q), k2)))
        k4 = f(*(s + h * d for s, d in zip((R, v, x, q), k3)))
        R, v, x, q = (s + h / 6 * (a + 2 * b + 2 * c + d) for s, a, b, c, d in zip((R, v, x, q), k1, k2, k3, k4))
    return SlamState(ExtendedPose(R, v, x), q)


def random_belief(rng, filt, n, spread=1.0):
    """Random observer state with n landmarks at moderate range and a random SPD Riccati matrix."""
    from rangeslam.eqf import FilterBelief
    from rangeslam.symmetry import SymmetryElement

    T = ExtendedPose(random_rotation(rng, spread), rng.normal(size=3) * 2, rng.normal(size=3) * 5)
    QR = np.array([random_rotation(rng, spread) for _ in range(n)]).reshape(n, 3, 3)
    Qc = 1.0 / rng.uniform(3.0, 30.0, n)
    d = 9 + 3 * n
    G = rng.normal(size=(d, d)) * 0.1
    S = G @ G.T + 0.01 * np.eye(d)
    return FilterBelief(SymmetryElement(T, QR, Qc), S, tuple(range(n)))


def fd_output_matrix(filt, belief, ids, y, h=1e-6):
    """C* from its definition: 1/2 (D rho(., y) + D rho(., yhat)) Ad_{X^-1} eps^, by central differences."""
    from rangeslam.symmetry import AlgebraElement, adjoint_rslam, correction_from_coords, output_action

    n = belief.n
    yhat = filt.predicted_ranges(belief)
    yfull = yhat.copy()
    rows = [belief.index(i) for i in ids]
    yfull[rows] = y
    Adinv = adjoint_rslam(belief.X.inverse())
    d = 9 + 3 * n
    C = np.zeros((len(ids), d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        v = Adinv @ correction_from_coords(e).as_vector()

        def drho(yy):
            plus = output_action(exp_group(AlgebraElement.from_vector(v * h)), yy)
            minus = output_action(exp_group(AlgebraElement.from_vector(-v * h)), yy)
            return (plus - minus) / (2 * h)

        C[:, j] = (0.5 * (drho(yfull) + drho(yhat)))[rows]
    return C
