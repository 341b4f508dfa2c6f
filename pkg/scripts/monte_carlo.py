"""Monte Carlo comparison of the EqF and the EKF on the simulated aerial scenario.

    python scripts/monte_carlo.py --seeds 20 --out-dir runs/mc

Every seed gets one simulated dataset shared by both filters. Per-run reports go
to <out-dir>/<filter>_<seed>.json and the merged table to comparison.txt/csv.
"""

from __future__ import annotations

import argparse
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from rangeslam.dataset_io import Dataset, RunConfig, load_config
from rangeslam.harness import compare_reports, report_json, run_dataset, simulate


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--first-seed", type=int, default=0)
    ap.add_argument("--out-dir", type=Path)
    args = ap.parse_args()

    base = load_config(args.config) if args.config else RunConfig()
    if args.out_dir:
        args.out_dir.mkdir(parents=True, exist_ok=True)

    reports, elapsed = [], {"eqf": 0.0, "ekf": 0.0}
    for seed in range(args.first_seed, args.first_seed + args.seeds):
        cfg = replace(base, seed=seed)
        sim = simulate(cfg)
        data = Dataset(sim.imu, sim.ranges, sim.truth, sim.landmarks)
        for name in ("eqf", "ekf"):
            t0 = time.perf_counter()
            out = run_dataset(cfg, data, name, label=f"{name}-{seed}")
            elapsed[name] += time.perf_counter() - t0
            reports.append(out.report)
            m = out.report.metrics
            print(
                f"seed {seed:3d} {name}: last40 {m.get('rmse_last40', float('nan')):7.3f} m  "
                f"map {m.get('map_mean', float('nan')):7.3f} m  converged {out.report.converged}"
            )
            if args.out_dir:
                (args.out_dir / f"{name}_{seed}.json").write_text(report_json(out.report, cfg))

    table, csv_text = compare_reports(reports)
    print(table)
    for name in ("eqf", "ekf"):
        vals = [r.metrics.get("rmse_last40") for r in reports if r.filter == name and r.converged]
        vals = [v for v in vals if v is not None]
        mean = np.mean(vals) if vals else float("nan")
        print(f"{name}: mean last40 {mean:.3f} m over {len(vals)} runs, {elapsed[name]:.1f} s total")
    if args.out_dir:
        (args.out_dir / "comparison.txt").write_text(table)
        (args.out_dir / "comparison.csv").write_text(csv_text)


if __name__ == "__main__":
    main()
