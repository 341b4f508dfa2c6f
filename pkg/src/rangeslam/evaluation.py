"""Rigid Umeyama alignment, translational RMSE and landmark mapping error."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DegenerateAlignmentError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RigidTransform:
    R: np.ndarray
    t: np.ndarray

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.R.T + self.t

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))


def umeyama_align(est: np.ndarray, truth: np.ndarray) -> RigidTransform:
    """Least-squares rigid transform (scale fixed to 1) with R est + t ~ truth."""
    est = np.asarray(est, dtype=float).reshape(-1, 3)
    truth = np.asarray(truth, dtype=float).reshape(-1, 3)
    if est.shape != truth.shape:
        raise ValueError("point sets must have the same shape")
    if len(est) < 3:
        raise DegenerateAlignmentError("need at least 3 correspondences")
    mu_e = est.mean(axis=0)
    mu_g = truth.mean(axis=0)
    E = est - mu_e
    G = truth - mu_g
    sv_e = np.linalg.svd(E, compute_uv=False)
    sv_g = np.linalg.svd(G, compute_uv=False)
    scale = max(sv_e[0], sv_g[0], 1e-300)
    if sv_e[1] < 1e-9 * scale or sv_g[1] < 1e-9 * scale:
        raise DegenerateAlignmentError("point set is collinear or coincident")
    U, _, Vt = np.linalg.svd(G.T @ E)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    return RigidTransform(R, mu_g - R @ mu_e)


def match_times(t_est: np.ndarray, t_truth: np.ndarray, tol: float = 0.01) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-neighbour association within ``tol`` seconds; returns index pairs."""
    t_est = np.asarray(t_est, dtype=float)
    t_truth = np.asarray(t_truth, dtype=float)
    j = np.clip(np.searchsorted(t_truth, t_est), 1, len(t_truth) - 1)
    left = t_truth[j - 1]
    right = t_truth[j]
    j = np.where(np.abs(t_est - left) <= np.abs(right - t_est), j - 1, j)
    ok = np.abs(t_truth[j] - t_est) <= tol
    return np.flatnonzero(ok), j[ok]


def rmse_position(t: np.ndarray, est: np.ndarray, truth: np.ndarray, window: str = "whole") -> float:
    """Translational RMSE over already-matched samples; ``last40pct`` keeps t >= t0 + 0.6 (t1 - t0)."""
    t = np.asarray(t, dtype=float)
    err = np.asarray(est, dtype=float) - np.asarray(truth, dtype=float)
    if window == "last40pct":
        mask = t >= t[0] + 0.6 * (t[-1] - t[0])
        err = err[mask]
    elif window != "whole":
        raise ValueError(f"unknown window {window!r}")
    return float(np.sqrt(np.mean(np.sum(err * err, axis=1))))


def mapping_error(est: np.ndarray, truth: np.ndarray) -> tuple[float, float]:
    """Mean and population standard deviation of per-landmark Euclidean errors."""
    e = np.linalg.norm(np.asarray(est, dtype=float) - np.asarray(truth, dtype=float), axis=1)
    return float(e.mean()), float(e.std())


@dataclass(frozen=True, eq=False)
class Metrics:
    rmse_whole: float
    rmse_last40: float
    map_mean: float
    map_std: float
    transform: RigidTransform


def evaluate_run(t_path, est_path, truth_t, truth_p, est_landmarks, true_landmarks) -> Metrics:
    """Align path and map jointly, then compute both RMSE windows and mapping error."""
    ie, it = match_times(t_path, truth_t)
    if len(ie) == 0:
        raise ValueError("no estimate samples match the truth timestamps")
    est_p = np.asarray(est_path)[ie]
    gt_p = np.asarray(truth_p)[it]
    est_lm = np.asarray(est_landmarks, dtype=float).reshape(-1, 3)
    true_lm = np.asarray(true_landmarks, dtype=float).reshape(-1, 3)
    tf = umeyama_align(np.vstack([est_p, est_lm]), np.vstack([gt_p, true_lm]))
    aligned = tf.apply(est_p)
    t = np.asarray(t_path)[ie]
    if len(est_lm):
        mean, std = mapping_error(tf.apply(est_lm), true_lm)
    else:
        mean, std = float("nan"), float("nan")
    return Metrics(
        rmse_position(t, aligned, gt_p, "whole"),
        rmse_position(t, aligned, gt_p, "last40pct"),
        mean,
        std,
        tf,
    )
