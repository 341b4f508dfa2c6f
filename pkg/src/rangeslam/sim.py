"""Synthetic ground truth, IMU and UWB range streams.

Trajectories are analytic (or quintic splines) so the IMU is synthesised from
exact derivatives: omega = vee(R^T R_dot), a = R^T (v_dot - g e3). The world
frame has e3 pointing down, matching v_dot = R a + g e3.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import make_interp_spline
from scipy.spatial.transform import Rotation

from .symmetry import E3, GRAVITY

TRAJECTORY_KINDS = ("stationary", "circle", "lissajous", "spline")


@dataclass(frozen=True)
class TrajectorySpec:
    kind: str = "lissajous"
    duration: float = 60.0  # s
    speed: float = 4.0  # m/s, nominal
    altitude: float = 10.0  # m above ground
    altitude_amplitude: float = 1.0  # m
    altitude_period: float = 23.0  # s
    size: float = 40.0  # m, extent of the path
    aspect: float = 0.6  # lissajous y/x amplitude ratio
    center: tuple = (0.0, 0.0)
    tilt: float = 0.05  # rad, roll/pitch oscillation amplitude
    yaw: float = 0.0  # rad, used when the vehicle is not moving
    seed: int = 0  # spline waypoints only


@dataclass(frozen=True)
class DropoutSpec:
    gap_duration: float = 10.0  # s
    duty_cycle: float = 0.9  # expected fraction of time with data, 1 disables gaps
    gaps: dict = field(default_factory=dict)  # landmark id -> [(start, end), ...], used as given


@dataclass(frozen=True)
class SensorSpec:
    imu_rate: float = 400.0  # Hz
    range_rate: float = 10.0  # Hz
    gyro_density: float = 2.6e-4  # rad/s/sqrt(Hz)
    accel_density: float = 1.7e-3  # m/s^2/sqrt(Hz)
    range_sigma: float = 0.25  # m
    range_offset: float = 0.0  # s, first range epoch
    gravity: float = GRAVITY
    dropout: DropoutSpec = field(default_factory=DropoutSpec)
    landmarks: tuple = ()  # ((id, (px, py, pz)), ...); empty means default_landmarks()

    def landmark_table(self) -> tuple[np.ndarray, np.ndarray]:
        table = self.landmarks or default_landmarks()
        ids = np.array([int(i) for i, _ in table], dtype=int)
        pos = np.array([p for _, p in table], dtype=float).reshape(-1, 3)
        return ids, pos


def default_landmarks() -> tuple:
    """Eight poles, 2 m high, scattered under the flight area (z is down)."""
    xy = [(-14.4, -13.2), (1.8, -15.6), (15.0, -10.8), (-16.2, 2.4), (15.6, 4.2), (-10.8, 14.4), (3.0, 13.8), (13.2, 15.6)]
    return tuple((i, (float(x), float(y), -2.0)) for i, (x, y) in enumerate(xy))


@dataclass(frozen=True, eq=False)
class ImuStream:
    t: np.ndarray
    omega: np.ndarray  # (N, 3) rad/s
    accel: np.ndarray  # (N, 3) m/s^2

    def __len__(self):
        return len(self.t)


@dataclass(frozen=True, eq=False)
class RangeStream:
    t: np.ndarray
    ids: np.ndarray
    r: np.ndarray

    def __len__(self):
        return len(self.t)

    def select(self, mask) -> "RangeStream":
        return RangeStream(self.t[mask], self.ids[mask], self.r[mask])


@dataclass(frozen=True, eq=False)
class TruthStream:
    t: np.ndarray
    p: np.ndarray  # (N, 3) m
    quat: np.ndarray  # (N, 4) w, x, y, z
    v: np.ndarray  # (N, 3) m/s

    def __len__(self):
        return len(self.t)

    @property
    def R(self) -> np.ndarray:
        return Rotation.from_quat(self.quat[:, [1, 2, 3, 0]]).as_matrix()


@dataclass(frozen=True, eq=False)
class LandmarkTable:
    ids: np.ndarray
    p: np.ndarray

    def __len__(self):
        return len(self.ids)

    def position(self, landmark_id: int) -> np.ndarray:
        return self.p[int(np.flatnonzero(self.ids == landmark_id)[0])]


@dataclass(frozen=True, eq=False)
class SimOutput:
    truth: TruthStream
    imu: ImuStream
    ranges: RangeStream
    landmarks: LandmarkTable
    trajectory: "Trajectory"


def _rot_zyx(yaw, pitch, roll):
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cr, sr = np.cos(roll), np.sin(roll)
    R = np.empty(np.shape(yaw) + (3, 3))
    R[..., 0, 0] = cy * cp
    R[..., 0, 1] = cy * sp * sr - sy * cr
    R[..., 0, 2] = cy * sp * cr + sy * sr
    R[..., 1, 0] = sy * cp
    R[..., 1, 1] = sy * sp * sr + cy * cr
    R[..., 1, 2] = sy * sp * cr - cy * sr
    R[..., 2, 0] = -sp
    R[..., 2, 1] = cp * sr
    R[..., 2, 2] = cp * cr
    return R


class Trajectory:
    """Analytic position/attitude with first and second derivatives."""

    def __init__(self, spec: TrajectorySpec):
        if spec.kind not in TRAJECTORY_KINDS:
            raise ValueError(f"unknown trajectory kind {spec.kind!r}; expected one of {TRAJECTORY_KINDS}")
        if spec.duration <= 0:
            raise ValueError("duration must be positive")
        self.spec = spec
        s = spec
        self._c = np.array([s.center[0], s.center[1], -s.altitude])
        half = 0.5 * s.size
        if s.kind == "circle":
            self._rate = s.speed / half
        elif s.kind == "lissajous":
            # x = A sin(w t), y = B sin(2 w t); mean speed ~ w * (A + 2B) * 2/pi
            self._A, self._B = half, s.aspect * half
            self._rate = s.speed / ((self._A + 2 * self._B) * 2 / np.pi)
        elif s.kind == "spline":
            rng = np.random.default_rng(s.seed)
            n_wp = max(int(np.ceil(s.duration * s.speed / (0.5 * half))), 6)
            knots = np.linspace(0.0, s.duration, n_wp)
            wp = np.column_stack([rng.uniform(-half, half, (n_wp, 2)), rng.uniform(-1, 1, n_wp) * s.altitude_amplitude])
            self._spline = make_interp_spline(knots, wp, k=5)
        self._alt_rate = 2 * np.pi / spec.altitude_period
        self._roll_rate = 2 * np.pi / 7.0
        self._pitch_rate = 2 * np.pi / 11.0

    # position and derivatives ---------------------------------------------
    def position(self, t, order: int = 0) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        s = self.spec
        out = np.zeros(t.shape + (3,))
        if s.kind == "circle":
            w, r = self._rate, 0.5 * s.size
            ph = w * t
            if order == 0:
                out[..., 0], out[..., 1] = r * np.cos(ph), r * np.sin(ph)
            elif order == 1:
                out[..., 0], out[..., 1] = -r * w * np.sin(ph), r * w * np.cos(ph)
            else:
                out[..., 0], out[..., 1] = -r * w * w * np.cos(ph), -r * w * w * np.sin(ph)
        elif s.kind == "lissajous":
            w = self._rate
            out[..., 0] = self._A * w**order * np.sin(w * t + order * np.pi / 2)
            out[..., 1] = self._B * (2 * w) ** order * np.sin(2 * w * t + order * np.pi / 2)
        elif s.kind == "spline":
            out[...] = self._spline(t, nu=order)
        if s.kind in ("circle", "lissajous"):
            wz = self._alt_rate
            out[..., 2] = -s.altitude_amplitude * wz**order * np.sin(wz * t + order * np.pi / 2)
        if order == 0:
            out = out + self._c
        return out

    def _angles(self, t):
        """(yaw, pitch, roll) and their rates."""
        t = np.asarray(t, dtype=float)
        s = self.spec
        roll = s.tilt * np.sin(self._roll_rate * t)
        droll = s.tilt * self._roll_rate * np.cos(self._roll_rate * t)
        pitch = s.tilt * np.sin(self._pitch_rate * t + 0.5)
        dpitch = s.tilt * self._pitch_rate * np.cos(self._pitch_rate * t + 0.5)
        if s.kind == "stationary":
            yaw = np.full(t.shape, s.yaw)
            dyaw = np.zeros(t.shape)
        else:
            v = self.position(t, 1)
            a = self.position(t, 2)
            yaw = np.arctan2(v[..., 1], v[..., 0])
            dyaw = (v[..., 0] * a[..., 1] - v[..., 1] * a[..., 0]) / (v[..., 0] ** 2 + v[..., 1] ** 2)
        return (yaw, pitch, roll), (dyaw, dpitch, droll)

    def rotation(self, t) -> np.ndarray:
        (yaw, pitch, roll), _ = self._angles(t)
        return _rot_zyx(yaw, pitch, roll)

    def body_rate(self, t) -> np.ndarray:
        (_, pitch, roll), (dyaw, dpitch, droll) = self._angles(t)
        sp, cp = np.sin(pitch), np.cos(pitch)
        sr, cr = np.sin(roll), np.cos(roll)
        return np.stack(
            [droll - dyaw * sp, dpitch * cr + dyaw * cp * sr, -dpitch * sr + dyaw * cp * cr], axis=-1
        )

    def specific_force(self, t, g: float = GRAVITY) -> np.ndarray:
        R = self.rotation(t)
        return np.einsum("...ji,...j->...i", R, self.position(t, 2) - g * E3)

    def imu(self, t, g: float = GRAVITY) -> tuple[np.ndarray, np.ndarray]:
        return self.body_rate(t), self.specific_force(t, g)


def _dropout_gaps(ids, duration, spec: DropoutSpec, rng) -> dict:
    if spec.gaps:
        return {int(k): [tuple(g) for g in v] for k, v in spec.gaps.items()}
    if spec.duty_cycle >= 1.0:
        return {}
    if not 0.0 < spec.duty_cycle < 1.0:
        raise ValueError("duty_cycle must be in (0, 1]")
    mean_up = spec.gap_duration * spec.duty_cycle / (1.0 - spec.duty_cycle)
    gaps = {}
    for lid in ids:
        # stationary alternating renewal: start in a gap with probability 1 - duty
        t = 0.0
        out = []
        if rng.random() > spec.duty_cycle:
            first = rng.uniform(0.0, spec.gap_duration)
            out.append((0.0, first))
            t = first
        while t < duration:
            t += rng.exponential(mean_up)
            if t >= duration:
                break
            out.append((t, t + spec.gap_duration))
            t += spec.gap_duration
        gaps[int(lid)] = out
    return gaps


def apply_dropout(ranges: RangeStream, gaps: dict) -> RangeStream:
    """Remove samples inside each landmark's [start, end) gap windows."""
    keep = np.ones(len(ranges), dtype=bool)
    for lid, windows in gaps.items():
        sel = ranges.ids == lid
        for start, end in windows:
            keep &= ~(sel & (ranges.t >= start) & (ranges.t < end))
    return ranges.select(keep)


def generate(traj: TrajectorySpec, sensors: SensorSpec, seed: int = 0, noise: bool = True) -> SimOutput:
    if sensors.imu_rate <= 0 or sensors.range_rate <= 0:
        raise ValueError("sensor rates must be positive")
    if sensors.range_sigma < 0:
        raise ValueError("range_sigma must be non-negative")
    trajectory = Trajectory(traj)
    g = sensors.gravity
    imu_rng, range_rng, drop_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))

    n_imu = int(round(traj.duration * sensors.imu_rate)) + 1
    t = np.arange(n_imu) / sensors.imu_rate
    R = trajectory.rotation(t)
    quat = Rotation.from_matrix(R).as_quat()[:, [3, 0, 1, 2]]
    quat *= np.where(quat[:, :1] < 0, -1.0, 1.0)
    truth = TruthStream(t, trajectory.position(t), quat, trajectory.position(t, 1))

    omega, accel = trajectory.imu(t, g)
    if noise:
        omega = omega + imu_rng.normal(size=omega.shape) * sensors.gyro_density * np.sqrt(sensors.imu_rate)
        accel = accel + imu_rng.normal(size=accel.shape) * sensors.accel_density * np.sqrt(sensors.imu_rate)
    imu = ImuStream(t, omega, accel)

    ids, pos = sensors.landmark_table()
    t_r = np.arange(sensors.range_offset, traj.duration + 1e-12, 1.0 / sensors.range_rate)
    x_r = trajectory.position(t_r)
    rt = np.repeat(t_r, len(ids))
    rid = np.tile(ids, len(t_r))
    dist = np.linalg.norm(pos[None, :, :] - x_r[:, None, :], axis=-1).ravel()
    if noise and sensors.range_sigma > 0:
        dist = np.maximum(dist + range_rng.normal(size=dist.shape) * sensors.range_sigma, 1e-3)
    ranges = RangeStream(rt, rid, dist)
    ranges = apply_dropout(ranges, _dropout_gaps(ids, traj.duration, sensors.dropout, drop_rng))
    return SimOutput(truth, imu, ranges, LandmarkTable(ids, pos), trajectory)


def aerial_scenario(duration: float = 60.0, **traj_overrides) -> tuple[TrajectorySpec, SensorSpec]:
    """Nominal aerial analog: figure-eight at 10 m over eight 2 m poles."""
    traj = TrajectorySpec(kind="lissajous", duration=duration, **traj_overrides)
    return traj, SensorSpec()
