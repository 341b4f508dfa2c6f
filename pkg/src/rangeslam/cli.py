"""Command line interface: ``rangeslam simulate | run | compare``.

Exit codes: 0 success, 1 usage or I/O error, 2 filter divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .dataset_io import FILTERS, DatasetError, RunConfig, load_config
from .harness import cmd_compare, cmd_run, cmd_simulate

EXIT_OK, EXIT_ERROR, EXIT_DIVERGED = 0, 1, 2

log = logging.getLogger("rangeslam")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rangeslam", description="Range-only inertial SLAM: EqF and EKF on simulated or recorded data.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a synthetic dataset (imu, range, truth, landmarks CSVs)")
    s.add_argument("--config", type=Path, help="YAML run configuration; defaults to the nominal aerial scenario")
    s.add_argument("--out-dir", type=Path, required=True, help="existing directory for the CSVs")
    s.add_argument("--seed", type=int)

    r = sub.add_parser("run", help="run a filter over a dataset and write estimates and a report")
    r.add_argument("--config", type=Path)
    r.add_argument("--dataset-dir", type=Path, required=True)
    r.add_argument("--out-dir", type=Path, required=True)
    r.add_argument("--filter", choices=FILTERS)
    r.add_argument("--seed", type=int, help="recorded in the report; the filters are deterministic")

    c = sub.add_parser("compare", help="merge run reports into a comparison table")
    c.add_argument("reports", nargs="+", type=Path, help="report.json files or run output directories")
    c.add_argument("--out-dir", type=Path, help="also write comparison.csv and comparison.txt here")
    return p


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "filter", None):
        changes["filter"] = args.filter
    return replace(cfg, **changes) if changes else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "simulate":
            cfg = _config(args)
            paths = cmd_simulate(cfg, args.out_dir)
            for path in paths.values():
                log.info("wrote %s", path)
            return EXIT_OK
        if args.command == "run":
            cfg = _config(args)
            out = cmd_run(cfg, args.dataset_dir, args.out_dir)
            rep = out.report
            if rep.metrics:
                m = {k: "-" if v is None else f"{v:.3f}" for k, v in rep.metrics.items()}
                print(
                    f"{rep.filter} seed {rep.seed}: rmse {m['rmse_whole']} m, last40 {m['rmse_last40']} m, "
                    f"map {m['map_mean']} +- {m['map_std']} m"
                )
            if not rep.converged:
                print(f"{rep.filter} did not converge: {rep.reason}", file=sys.stderr)
                return EXIT_DIVERGED
            return EXIT_OK
        text, _ = cmd_compare(args.reports, args.out_dir)
        sys.stdout.write(text)
        return EXIT_OK
    except (OSError, DatasetError, ValueError) as exc:
        print(f"rangeslam: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
