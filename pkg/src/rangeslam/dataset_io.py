"""CSV stream formats and the YAML run configuration.

Floats are written with ``repr`` (shortest round-trip decimal), so a write/read
cycle reproduces every stream bit for bit. Loaders check the header, the
column count, finiteness and time ordering, and name the offending line.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .sim import (
    DropoutSpec,
    ImuStream,
    LandmarkTable,
    RangeStream,
    SensorSpec,
    SimOutput,
    TrajectorySpec,
    TruthStream,
)
from .symmetry import GRAVITY

IMU_COLUMNS = ("t", "wx", "wy", "wz", "ax", "ay", "az")
RANGE_COLUMNS = ("t", "landmark_id", "range")
TRUTH_COLUMNS = ("t", "px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz")
LANDMARK_COLUMNS = ("landmark_id", "px", "py", "pz")
QUAT_TOL = 1e-6

FILENAMES = {"imu": "imu.csv", "range": "range.csv", "truth": "truth.csv", "landmarks": "landmarks.csv"}


class DatasetError(ValueError):
    """Malformed input file; the message names the file, line and column."""


def _fmt(x) -> str:
    return repr(float(x))


def _write(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read(path, header) -> list[tuple[int, list[str]]]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"{path}: no such file")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file, expected header {','.join(header)}") from None
        got = [c.strip() for c in got]
        if tuple(got) != tuple(header):
            raise DatasetError(f"{path}:1: header {','.join(got)!r} does not match {','.join(header)!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DatasetError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
            rows.append((lineno, row))
    return rows


def _parse(path, header, rows, int_cols=()):
    n = len(rows)
    out = {c: np.empty(n, dtype=int if c in int_cols else float) for c in header}
    for k, (lineno, row) in enumerate(rows):
        for c, cell in zip(header, row):
            try:
                if c in int_cols:
                    out[c][k] = int(cell)
                else:
                    v = float(cell)
                    if not math.isfinite(v):
                        raise ValueError
                    out[c][k] = v
            except ValueError:
                kind = "integer" if c in int_cols else "finite number"
                raise DatasetError(f"{path}:{lineno}: column {c!r} is not a {kind}: {cell!r}") from None
    return out


def _check_time(path, rows, t, strict):
    bad = np.diff(t) <= 0 if strict else np.diff(t) < 0
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0]) + 1
        order = "strictly increasing" if strict else "non-decreasing"
        raise DatasetError(f"{path}:{rows[k][0]}: column 't' must be {order}")


# -- writers -----------------------------------------------------------------
def write_imu_csv(path, imu: ImuStream) -> None:
    data = np.column_stack([imu.t, imu.omega, imu.accel]) if len(imu) else np.zeros((0, 7))
    _write(path, IMU_COLUMNS, ([_fmt(x) for x in r] for r in data))


def write_range_csv(path, ranges: RangeStream) -> None:
    rows = ([_fmt(t), str(int(i)), _fmt(r)] for t, i, r in zip(ranges.t, ranges.ids, ranges.r))
    _write(path, RANGE_COLUMNS, rows)


def write_truth_csv(path, truth: TruthStream) -> None:
    data = np.column_stack([truth.t, truth.p, truth.quat, truth.v]) if len(truth) else np.zeros((0, 11))
    _write(path, TRUTH_COLUMNS, ([_fmt(x) for x in r] for r in data))


def write_landmarks_csv(path, landmarks: LandmarkTable) -> None:
    rows = ([str(int(i))] + [_fmt(x) for x in p] for i, p in zip(landmarks.ids, landmarks.p))
    _write(path, LANDMARK_COLUMNS, rows)


# -- loaders -----------------------------------------------------------------
def load_imu_csv(path) -> ImuStream:
    rows = _read(path, IMU_COLUMNS)
    c = _parse(path, IMU_COLUMNS, rows)
    _check_time(path, rows, c["t"], strict=True)
    omega = np.column_stack([c["wx"], c["wy"], c["wz"]]).reshape(-1, 3)
    accel = np.column_stack([c["ax"], c["ay"], c["az"]]).reshape(-1, 3)
    return ImuStream(c["t"], omega, accel)


def load_range_csv(path) -> RangeStream:
    rows = _read(path, RANGE_COLUMNS)
    c = _parse(path, RANGE_COLUMNS, rows, int_cols=("landmark_id",))
    _check_time(path, rows, c["t"], strict=False)
    bad = np.flatnonzero(c["range"] <= 0)
    if len(bad):
        raise DatasetError(f"{path}:{rows[bad[0]][0]}: column 'range' must be positive")
    return RangeStream(c["t"], c["landmark_id"], c["range"])


def load_truth_csv(path) -> TruthStream:
    rows = _read(path, TRUTH_COLUMNS)
    c = _parse(path, TRUTH_COLUMNS, rows)
    _check_time(path, rows, c["t"], strict=True)
    quat = np.column_stack([c["qw"], c["qx"], c["qy"], c["qz"]]).reshape(-1, 4)
    norm = np.linalg.norm(quat, axis=1)
    bad = np.flatnonzero(np.abs(norm - 1.0) > QUAT_TOL)
    if len(bad):
        raise DatasetError(f"{path}:{rows[bad[0]][0]}: quaternion norm {norm[bad[0]]!r} is not 1 within {QUAT_TOL}")
    p = np.column_stack([c["px"], c["py"], c["pz"]]).reshape(-1, 3)
    v = np.column_stack([c["vx"], c["vy"], c["vz"]]).reshape(-1, 3)
    # stored as read so that write/read is exact; rotations are normalised on conversion
    return TruthStream(c["t"], p, quat, v)


def load_landmarks_csv(path) -> LandmarkTable:
    rows = _read(path, LANDMARK_COLUMNS)
    c = _parse(path, LANDMARK_COLUMNS, rows, int_cols=("landmark_id",))
    ids = c["landmark_id"]
    _, first = np.unique(ids, return_index=True)
    if len(first) != len(ids):
        dup = sorted(set(range(len(ids))) - set(first.tolist()))[0]
        raise DatasetError(f"{path}:{rows[dup][0]}: duplicate landmark_id {ids[dup]}")
    return LandmarkTable(ids, np.column_stack([c["px"], c["py"], c["pz"]]).reshape(-1, 3))


@dataclass(frozen=True, eq=False)
class Dataset:
    imu: ImuStream
    ranges: RangeStream
    truth: TruthStream | None = None
    landmarks: LandmarkTable | None = None


def write_dataset(directory, sim: SimOutput) -> dict:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"{d}: output directory does not exist")
    paths = {k: d / v for k, v in FILENAMES.items()}
    write_imu_csv(paths["imu"], sim.imu)
    write_range_csv(paths["range"], sim.ranges)
    write_truth_csv(paths["truth"], sim.truth)
    write_landmarks_csv(paths["landmarks"], sim.landmarks)
    return paths


def load_dataset(directory, names: dict | None = None) -> Dataset:
    """IMU and range files are required; truth and landmarks are loaded when present."""
    d = Path(directory)
    names = {**FILENAMES, **(names or {})}
    imu = load_imu_csv(d / names["imu"])
    ranges = load_range_csv(d / names["range"])
    truth = load_truth_csv(d / names["truth"]) if (d / names["truth"]).is_file() else None
    lms = load_landmarks_csv(d / names["landmarks"]) if (d / names["landmarks"]).is_file() else None
    return Dataset(imu, ranges, truth, lms)


# -- run configuration -----------------------------------------------------------
FILTERS = ("eqf", "ekf")


@dataclass(frozen=True)
class NoiseSection:
    gyro_psd: float = 6.76e-8  # (rad/s)^2/Hz
    accel_psd: float = 2.89e-6  # (m/s^2)^2/Hz
    range_var: float = 4.0  # m^2, output gain per range


@dataclass(frozen=True)
class InitSection:
    sigma0_nav: tuple = (1e-4,) * 3 + (1e-2,) * 3 + (1e-2,) * 3  # rad^2, (m/s)^2, m^2
    sigma0_lm: tuple = (3.0, 3.0, 3.0)  # EqF: rad^2, rad^2, log(m)^2
    ekf_profile: str = "aerial"  # EKF landmark covariance profile: aerial 50 m^2, ground 10 m^2


@dataclass(frozen=True)
class ScenarioSection:
    trajectory: TrajectorySpec = field(default_factory=TrajectorySpec)
    sensors: SensorSpec = field(default_factory=SensorSpec)


@dataclass(frozen=True)
class RunConfig:
    filter: str = "eqf"
    seed: int = 0
    gravity: float = GRAVITY  # m/s^2
    reset_mode: str = "numerical_transport"
    gate: float | None = None
    landmark_init: str = "first_range"
    record_every: int = 40  # IMU samples between recorded estimates
    noise: NoiseSection = field(default_factory=NoiseSection)
    init: InitSection = field(default_factory=InitSection)
    files: dict = field(default_factory=lambda: dict(FILENAMES))
    scenario: ScenarioSection = field(default_factory=ScenarioSection)

    def __post_init__(self):
        if self.filter not in FILTERS:
            raise ValueError(f"filter must be one of {FILTERS}, got {self.filter!r}")
        if len(self.init.sigma0_nav) != 9 or len(self.init.sigma0_lm) != 3:
            raise ValueError("init.sigma0_nav needs 9 entries and init.sigma0_lm 3")
        if min(self.init.sigma0_nav) <= 0 or min(self.init.sigma0_lm) <= 0:
            raise ValueError("initial covariances must be positive")
        if min(self.noise.gyro_psd, self.noise.accel_psd, self.noise.range_var) <= 0:
            raise ValueError("noise gains must be positive")
        unknown = set(self.files) - set(FILENAMES)
        if unknown:
            raise ValueError(f"unknown files entries {sorted(unknown)}")


def _build(cls, data, where, **extra):
    if data is None:
        return cls(**extra)
    if not isinstance(data, dict):
        raise ValueError(f"{where}: expected a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ValueError(f"{where}: unknown keys {sorted(unknown)}")
    kw = {}
    for k, v in data.items():
        if isinstance(v, list):
            v = tuple(tuple(x) if isinstance(x, list) else x for x in v)
        kw[k] = v
    return cls(**kw, **extra)


def config_from_dict(data: dict) -> RunConfig:
    data = dict(data or {})
    sc = dict(data.pop("scenario", None) or {})
    sensors = dict(sc.pop("sensors", None) or {})
    dropout = _build(DropoutSpec, sensors.pop("dropout", None), "scenario.sensors.dropout")
    extra = {"dropout": dropout}
    lms = sensors.pop("landmarks", None)
    if lms:
        try:
            extra["landmarks"] = tuple((int(i), (float(x), float(y), float(z))) for i, x, y, z in lms)
        except (TypeError, ValueError):
            raise ValueError("scenario.sensors.landmarks: expected rows [id, px, py, pz]") from None
    scenario = ScenarioSection(
        _build(TrajectorySpec, sc.pop("trajectory", None), "scenario.trajectory"),
        _build(SensorSpec, sensors, "scenario.sensors", **extra),
    )
    if sc:
        raise ValueError(f"scenario: unknown keys {sorted(sc)}")
    noise = _build(NoiseSection, data.pop("noise", None), "noise")
    init = _build(InitSection, data.pop("init", None), "init")
    files = {**FILENAMES, **(data.pop("files", None) or {})}
    top = {f.name for f in fields(RunConfig)} - {"noise", "init", "files", "scenario"}
    unknown = set(data) - top
    if unknown:
        raise ValueError(f"unknown keys {sorted(unknown)}")
    return RunConfig(noise=noise, init=init, files=files, scenario=scenario, **data)


def config_to_dict(cfg: RunConfig) -> dict:
    d = asdict(cfg)
    sensors = d["scenario"]["sensors"]
    ids, pos = cfg.scenario.sensors.landmark_table()
    sensors["landmarks"] = [[int(i), *map(float, p)] for i, p in zip(ids, pos)]

    def plain(x):
        if isinstance(x, dict):
            return {k: plain(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [plain(v) for v in x]
        if isinstance(x, (np.floating, np.integer)):
            return x.item()
        return x

    return plain(d)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"{path}: no such config file")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ValueError(f"{path}: invalid YAML: {exc}") from None
    try:
        return config_from_dict(data or {})
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{path}: {exc}") from None


def dump_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=False), encoding="utf-8")
