"""Timestamp-ordered fold of IMU and range streams through a filter."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .eqf import EquivariantFilter, FilterError
from .lie import AntipodalRotationError, ExtendedPose
from .sim import ImuStream, LandmarkTable, RangeStream
from .symmetry import ChartError, DegenerateLandmarkError

log = logging.getLogger(__name__)

DIVERGENCE_NORM = 1e12
LANDMARK_INIT = ("first_range", "truth")


@dataclass(frozen=True, eq=False)
class RunResult:
    filter: str
    t: np.ndarray  # record times
    p: np.ndarray  # (M, 3)
    quat: np.ndarray  # (M, 4) w, x, y, z
    v: np.ndarray  # (M, 3)
    landmark_ids: np.ndarray  # all ids seen in the range stream, ascending
    landmark_track: np.ndarray  # (M, L, 3) world estimates, NaN before initialisation
    final_landmarks: np.ndarray  # (L, 3), NaN if never initialised
    first_seen: np.ndarray  # (L,) time of first range, NaN if never seen
    n_ranges: np.ndarray  # (L,) number of ranges per landmark
    diverged: bool
    reason: str = ""


def _quat_wxyz(R: np.ndarray) -> np.ndarray:
    q = Rotation.from_matrix(R).as_quat()
    q = q[[3, 0, 1, 2]]
    return -q if q[0] < 0 else q


def run_filter(
    filt,
    imu: ImuStream,
    ranges: RangeStream,
    init_pose: ExtendedPose,
    landmark_init: str = "first_range",
    landmarks: LandmarkTable | None = None,
    record_every: int = 40,
) -> RunResult:
    if landmark_init not in LANDMARK_INIT:
        raise ValueError(f"landmark_init must be one of {LANDMARK_INIT}")
    if landmark_init == "truth" and landmarks is None:
        raise ValueError("landmark_init='truth' needs the landmark table")
    if len(imu) < 2:
        raise ValueError("need at least two IMU samples")
    if np.any(np.diff(imu.t) <= 0) or np.any(np.diff(ranges.t) < 0):
        raise ValueError("streams must be time ordered")
    is_eqf = isinstance(filt, EquivariantFilter)
    name = "eqf" if is_eqf else "ekf"

    all_ids = np.unique(ranges.ids).astype(int)
    slot = {int(i): k for k, i in enumerate(all_ids)}
    L = len(all_ids)
    first_seen = np.full(L, np.nan)
    n_ranges = np.zeros(L, dtype=int)
    for k, i in enumerate(all_ids):
        sel = ranges.ids == i
        n_ranges[k] = int(sel.sum())
        first_seen[k] = ranges.t[sel][0]

    b = filt.initial_belief(init_pose)
    rec_t, rec_p, rec_q, rec_v, rec_lm = [], [], [], [], []

    def record(t):
        P = filt.pose_estimate(b)
        rec_t.append(t)
        rec_p.append(P.x.copy())
        rec_q.append(_quat_wxyz(P.R))
        rec_v.append(P.v.copy())
        lm = np.full((L, 3), np.nan)
        if b.n:
            lm[[slot[i] for i in b.ids]] = filt.world_landmarks(b)
        rec_lm.append(lm)

    def apply_epoch(t_epoch, ids, rs):
        nonlocal b
        known_ids, known_r = [], []
        for lid, r in zip(ids, rs):
            lid = int(lid)
            if lid in b.ids:
                known_ids.append(lid)
                known_r.append(r)
                continue
            if landmark_init == "truth":
                p = landmarks.position(lid)
                P = filt.pose_estimate(b)
                if is_eqf:
                    b = filt.add_landmark(b, lid, r, q_init=P.R.T @ (p - P.x))
                else:
                    b = filt.add_landmark(b, lid, r, p_init=p)
            else:
                b = filt.add_landmark(b, lid, r)
        if known_ids:
            b = filt.update(b, known_ids, known_r)

    def interp_input(k, a, c):
        """IMU input on [a, c] within sample interval k: linear interpolation at the midpoint."""
        t0, t1 = imu.t[k], imu.t[k + 1]
        s = (0.5 * (a + c) - t0) / (t1 - t0)
        return (1 - s) * imu.omega[k] + s * imu.omega[k + 1], (1 - s) * imu.accel[k] + s * imu.accel[k + 1]

    # group range samples into epochs sharing a timestamp
    r_t, r_ids, r_r = ranges.t, ranges.ids, ranges.r
    boundaries = np.flatnonzero(np.diff(r_t) > 0) + 1
    starts = np.concatenate([[0], boundaries]) if len(r_t) else np.zeros(0, dtype=int)
    ends = np.concatenate([boundaries, [len(r_t)]]) if len(r_t) else np.zeros(0, dtype=int)
    e = 0
    n_epochs = len(starts)

    diverged, reason = False, ""
    tcur = imu.t[0]
    try:
        while e < n_epochs and r_t[starts[e]] <= tcur:
            apply_epoch(r_t[starts[e]], r_ids[starts[e] : ends[e]], r_r[starts[e] : ends[e]])
            e += 1
        record(tcur)
        for k in range(len(imu) - 1):
            t1 = imu.t[k + 1]
            while e < n_epochs and r_t[starts[e]] <= t1:
                te = r_t[starts[e]]
                if te > tcur:
                    w, a = interp_input(k, tcur, te)
                    b = filt.propagate(b, w, a, te - tcur)
                    tcur = te
                apply_epoch(te, r_ids[starts[e] : ends[e]], r_r[starts[e] : ends[e]])
                e += 1
            if t1 > tcur:
                w, a = interp_input(k, tcur, t1)
                b = filt.propagate(b, w, a, t1 - tcur)
                tcur = t1
            S = b.Sigma
            if not np.isfinite(S).all() or np.abs(S).sum(axis=1).max() > DIVERGENCE_NORM:
                raise FilterError("Riccati matrix diverged")
            if (k + 1) % record_every == 0 or k == len(imu) - 2:
                record(tcur)
    except (FilterError, ChartError, AntipodalRotationError, DegenerateLandmarkError, np.linalg.LinAlgError) as exc:
        diverged, reason = True, f"{type(exc).__name__}: {exc}"
        log.warning("%s diverged at t=%.3f: %s", name, tcur, reason)

    final = rec_lm[-1] if rec_lm else np.full((L, 3), np.nan)
    P = filt.pose_estimate(b)
    if not (np.all(np.isfinite(P.x)) and np.all(np.isfinite(final[~np.isnan(final).any(axis=1)]))):
        diverged, reason = True, reason or "non-finite state"
    return RunResult(
        name,
        np.asarray(rec_t),
        np.asarray(rec_p).reshape(-1, 3),
        np.asarray(rec_q).reshape(-1, 4),
        np.asarray(rec_v).reshape(-1, 3),
        all_ids,
        np.asarray(rec_lm).reshape(len(rec_t), L, 3),
        final,
        first_seen,
        n_ranges,
        diverged,
        reason,
    )
