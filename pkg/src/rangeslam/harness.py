"""Experiment pipeline: simulate, run a filter on a dataset, report, compare."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset_io import (
    Dataset,
    RunConfig,
    config_to_dict,
    load_dataset,
    write_dataset,
    write_landmarks_csv,
    write_truth_csv,
)
from .ekf import LANDMARK_PROFILES, EkfNoise, RangeEKF
from .eqf import EquivariantFilter, NoiseConfig
from .evaluation import DegenerateAlignmentError, RigidTransform, evaluate_run
from .lie import ExtendedPose
from .runner import RunResult, run_filter
from .sim import LandmarkTable, SimOutput, TruthStream, generate

METRIC_COLUMNS = ("rmse_whole", "rmse_last40", "map_mean", "map_std")
REPORT_NAME = "report.json"


@dataclass
class ExperimentReport:
    filter: str
    seed: int
    converged: bool
    reason: str = ""
    metrics: dict = field(default_factory=dict)  # METRIC_COLUMNS -> float or None
    landmark_errors: dict = field(default_factory=dict)  # id -> final aligned error, m
    n_landmarks: int = 0
    label: str = ""

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "filter": self.filter,
            "seed": self.seed,
            "converged": self.converged,
            "reason": self.reason,
            "metrics": {k: _num(self.metrics.get(k)) for k in METRIC_COLUMNS},
            "landmark_errors": {str(k): _num(v) for k, v in sorted(self.landmark_errors.items())},
            "n_landmarks": self.n_landmarks,
        }

    @staticmethod
    def from_dict(d: dict) -> "ExperimentReport":
        return ExperimentReport(
            filter=d["filter"],
            seed=int(d["seed"]),
            converged=bool(d["converged"]),
            reason=d.get("reason", ""),
            metrics={k: d["metrics"].get(k) for k in METRIC_COLUMNS},
            landmark_errors={int(k): v for k, v in d.get("landmark_errors", {}).items()},
            n_landmarks=int(d.get("n_landmarks", 0)),
            label=d.get("label", ""),
        )


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def simulate(cfg: RunConfig, seed: int | None = None, noise: bool = True) -> SimOutput:
    seed = cfg.seed if seed is None else seed
    return generate(cfg.scenario.trajectory, cfg.scenario.sensors, seed=seed, noise=noise)


def cmd_simulate(cfg: RunConfig, out_dir, seed: int | None = None) -> dict:
    """Write the four dataset CSVs; the directory must already exist."""
    return write_dataset(out_dir, simulate(cfg, seed))


def make_filter(cfg: RunConfig, name: str | None = None):
    name = name or cfg.filter
    n = cfg.noise
    if name == "eqf":
        noise = NoiseConfig(n.gyro_psd, n.accel_psd, n.range_var, tuple(cfg.init.sigma0_nav), tuple(cfg.init.sigma0_lm))
        return EquivariantFilter(noise=noise, gravity=cfg.gravity, reset_mode=cfg.reset_mode, gate=cfg.gate)
    if name == "ekf":
        s = LANDMARK_PROFILES[cfg.init.ekf_profile]
        noise = EkfNoise(n.gyro_psd, n.accel_psd, n.range_var, tuple(cfg.init.sigma0_nav), (s, s, s))
        return RangeEKF(noise=noise, gravity=cfg.gravity, reset_mode=cfg.reset_mode, gate=cfg.gate)
    raise ValueError(f"unknown filter {name!r}")


def initial_pose(data: Dataset) -> ExtendedPose:
    """Navigation prior: the first truth sample if present, else level and at rest at the origin."""
    if data.truth is None or len(data.truth) == 0:
        return ExtendedPose.identity()
    tr = data.truth
    return ExtendedPose(tr.R[0], tr.v[0].copy(), tr.p[0].copy())


def landmark_error_series(res: RunResult, slots, true_p: np.ndarray, tf: RigidTransform) -> list[tuple]:
    """Tidy rows (t, landmark_id, error) of aligned errors for the given track slots."""
    rows = []
    for k, p in zip(slots, true_p):
        track = res.landmark_track[:, k]
        ok = ~np.isnan(track).any(axis=1)
        err = np.linalg.norm(tf.apply(track[ok]) - p, axis=1)
        lid = int(res.landmark_ids[k])
        rows.extend((float(t), lid, float(e)) for t, e in zip(res.t[ok], err))
    rows.sort(key=lambda r: (r[0], r[1]))
    return rows


@dataclass(frozen=True, eq=False)
class RunOutput:
    result: RunResult
    report: ExperimentReport
    error_rows: list


def evaluate(res: RunResult, data: Dataset, seed: int, label: str = "") -> RunOutput:
    rep = ExperimentReport(res.filter, seed, not res.diverged, res.reason, label=label)
    rep.n_landmarks = int(np.sum(~np.isnan(res.final_landmarks).any(axis=1)))
    rows = []
    if data.truth is None or data.landmarks is None:
        return RunOutput(res, rep, rows)
    surveyed = set(data.landmarks.ids.tolist())
    initialised = ~np.isnan(res.final_landmarks).any(axis=1)
    idx = [k for k, lid in enumerate(res.landmark_ids) if int(lid) in surveyed and initialised[k]]
    true_lm = np.array([data.landmarks.position(int(res.landmark_ids[k])) for k in idx]).reshape(-1, 3)
    finite_path = np.isfinite(res.p).all(axis=1)
    try:
        m = evaluate_run(
            res.t[finite_path],
            res.p[finite_path],
            data.truth.t,
            data.truth.p,
            res.final_landmarks[idx],
            true_lm,
        )
    except (DegenerateAlignmentError, ValueError) as exc:
        rep.reason = rep.reason or f"evaluation skipped: {exc}"
        return RunOutput(res, rep, rows)
    rep.metrics = {"rmse_whole": m.rmse_whole, "rmse_last40": m.rmse_last40, "map_mean": m.map_mean, "map_std": m.map_std}
    aligned = m.transform.apply(res.final_landmarks[idx])
    rep.landmark_errors = {
        int(res.landmark_ids[k]): float(np.linalg.norm(a - p)) for k, a, p in zip(idx, aligned, true_lm)
    }
    rows = landmark_error_series(res, idx, true_lm, m.transform)
    return RunOutput(res, rep, rows)


def run_dataset(cfg: RunConfig, data: Dataset, name: str | None = None, label: str = "") -> RunOutput:
    filt = make_filter(cfg, name)
    res = run_filter(
        filt,
        data.imu,
        data.ranges,
        initial_pose(data),
        landmark_init=cfg.landmark_init,
        landmarks=data.landmarks,
        record_every=cfg.record_every,
    )
    return evaluate(res, data, cfg.seed, label)


def report_json(rep: ExperimentReport, cfg: RunConfig | None = None) -> str:
    d = rep.to_dict()
    if cfg is not None:
        d["config"] = config_to_dict(cfg)
    return json.dumps(d, indent=2, sort_keys=True) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _cell(x) -> str:
    return "" if x is None else repr(float(x))


def write_run_outputs(out_dir, out: RunOutput, cfg: RunConfig) -> dict:
    """Write estimate.csv, landmarks_est.csv, landmark_error.csv, report.json and report.csv."""
    out_dir = Path(out_dir)
    if not out_dir.is_dir():
        raise FileNotFoundError(f"output directory {out_dir} does not exist")
    res, rep = out.result, out.report
    paths = {name: out_dir / name for name in ("estimate.csv", "landmarks_est.csv", "landmark_error.csv", REPORT_NAME, "report.csv")}
    write_truth_csv(paths["estimate.csv"], TruthStream(res.t, res.p, res.quat, res.v))
    ok = ~np.isnan(res.final_landmarks).any(axis=1)
    write_landmarks_csv(paths["landmarks_est.csv"], LandmarkTable(res.landmark_ids[ok], res.final_landmarks[ok]))
    paths["landmark_error.csv"].write_text(
        _csv_text(("t", "landmark_id", "error"), [(repr(t), i, repr(e)) for t, i, e in out.error_rows])
    )
    paths[REPORT_NAME].write_text(report_json(rep, cfg))
    paths["report.csv"].write_text(
        _csv_text(
            ("filter", "seed", "converged") + METRIC_COLUMNS,
            [(rep.filter, rep.seed, int(rep.converged)) + tuple(_cell(rep.metrics.get(k)) for k in METRIC_COLUMNS)],
        )
    )
    return paths


def cmd_run(cfg: RunConfig, dataset_dir, out_dir, name: str | None = None) -> RunOutput:
    data = load_dataset(dataset_dir, cfg.files)
    if not Path(out_dir).is_dir():
        raise FileNotFoundError(f"output directory {out_dir} does not exist")
    out = run_dataset(cfg, data, name)
    write_run_outputs(out_dir, out, cfg)
    return out


# -- comparison ---------------------------------------------------------------


def load_report(path) -> ExperimentReport:
    path = Path(path)
    if path.is_dir():
        path = path / REPORT_NAME
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    try:
        rep = ExperimentReport.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: not a run report ({exc})") from None
    if not rep.label:
        rep.label = f"{rep.filter}/seed{rep.seed}"
    return rep


def best_rows(reports: list[ExperimentReport]) -> dict:
    """Column -> indices of converged rows attaining the column minimum."""
    best = {}
    for col in METRIC_COLUMNS:
        vals = [(r.metrics.get(col), i) for i, r in enumerate(reports) if r.converged and r.metrics.get(col) is not None]
        if vals:
            lo = min(v for v, _ in vals)
            best[col] = [i for v, i in vals if v == lo]
    return best


def compare_reports(reports: list[ExperimentReport]) -> tuple[str, str]:
    """Comparison table as (text, csv); best per column starred, non-converged runs flagged."""
    best = best_rows(reports)
    header = ("run", "filter", "seed") + METRIC_COLUMNS + ("status",)
    text_rows, csv_rows = [], []
    for i, r in enumerate(reports):
        cells = []
        for col in METRIC_COLUMNS:
            v = r.metrics.get(col)
            s = "-" if v is None else f"{v:.3f}"
            cells.append(s + ("*" if i in best.get(col, ()) else ""))
        status = "ok" if r.converged else "NOT CONVERGED"
        text_rows.append((r.label, r.filter, str(r.seed), *cells, status))
        csv_rows.append(
            (
                r.label,
                r.filter,
                r.seed,
                *(_cell(r.metrics.get(c)) for c in METRIC_COLUMNS),
                int(r.converged),
                ";".join(c for c in METRIC_COLUMNS if i in best.get(c, ())),
            )
        )
    widths = [max(len(h), *(len(row[j]) for row in text_rows)) if text_rows else len(h) for j, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in text_rows]
    lines.append("* best among converged runs")
    csv_text = _csv_text(("run", "filter", "seed") + METRIC_COLUMNS + ("converged", "best"), csv_rows)
    return "\n".join(lines) + "\n", csv_text


def cmd_compare(paths, out_dir=None) -> tuple[str, str]:
    reports = [load_report(p) for p in paths]
    text, csv_text = compare_reports(reports)
    if out_dir is not None:
        out_dir = Path(out_dir)
        if not out_dir.is_dir():
            raise FileNotFoundError(f"output directory {out_dir} does not exist")
        (out_dir / "comparison.csv").write_text(csv_text)
        (out_dir / "comparison.txt").write_text(text)
    return text, csv_text
