"""Command-line entry point: ``dmimo <experiment> [options]``."""

import argparse
import csv
import json
import sys
from typing import List, Optional

import numpy as np

from .harness import RUNNERS, ExperimentConfig, default_config, write_trace_csv
from .harness.budgets import drift_phase_budget, dynamic_range_budget
from .harness.metrics import _jsonable
from .mac import ConvergenceError, sum_rate_curves
from .numerics import DegenerateFitError, RankError

_SUM_RATE_KEYS = ("k_users", "m_antennas", "snr_db", "n_draws", "seed")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with configuration overrides")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--trials", type=int, help="number of trials or channel draws")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--workers", type=int, default=1, help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dmimo", description="Distributed MIMO downlink experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        _common(p)
        if name == "sync-accuracy":
            p.add_argument("--trace", help="write tracker trace of the first trial as CSV")
    p = sub.add_parser("sum-rate", help="sum-rate curves of greedy ZF and DPC")
    _common(p)
    p = sub.add_parser("budget", help="dynamic-range and drift budgets")
    p.add_argument("--alpha", type=float, help="distance ratio for the dynamic-range budget")
    p.add_argument("--drift-ppm", type=float, help="clock drift in ppm")
    p.add_argument("--frame-duration", type=float, default=4e-6, help="seconds (default 4e-6)")
    p.add_argument("--carrier-hz", type=float, default=2.4e9, help="carrier in Hz (default 2.4e9)")
    p.add_argument("--out", help="output path (default: stdout)")
    return parser


def _load_json(path: Optional[str]) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        d = json.load(fh)
    if not isinstance(d, dict):
        raise ValueError("config file must hold a JSON object")
    return d


def _seed(v: int) -> int:
    if not 0 <= v < 2 ** 64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return v


def experiment_config(name: str, args) -> ExperimentConfig:
    """Experiment defaults, then the config file, then command-line flags."""
    d = {**default_config(name).to_dict(), **_load_json(args.config)}
    if args.seed is not None:
        d["seed"] = _seed(args.seed)
    if args.trials is not None:
        d["n_trials"] = args.trials
    return ExperimentConfig.from_dict(d)


def _open_out(path: Optional[str]):
    return open(path, "w", newline="") if path else sys.stdout


def _emit_json(obj, path: Optional[str]) -> None:
    fh = _open_out(path)
    try:
        json.dump(_jsonable(obj), fh, indent=2)
        fh.write("\n")
    finally:
        if path:
            fh.close()


def _emit_csv(header, rows, path: Optional[str]) -> None:
    fh = _open_out(path)
    try:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    finally:
        if path:
            fh.close()


def _run_experiment(name: str, args) -> None:
    cfg = experiment_config(name, args)
    kw = {"workers": args.workers}
    trace = [] if getattr(args, "trace", None) else None
    if trace is not None:
        kw["trace"] = trace
    report = RUNNERS[name](cfg, **kw)
    if trace is not None:
        write_trace_csv(args.trace, trace)
    if args.format == "json":
        _emit_json(report.to_dict(), args.out)
    else:
        _emit_csv(("metric", "trial", "user", "value"), report.rows(), args.out)


def _run_sum_rate(args) -> None:
    d = _load_json(args.config)
    unknown = set(d) - set(_SUM_RATE_KEYS)
    if unknown:
        raise ValueError(f"unknown sum-rate keys: {sorted(unknown)}")
    if args.seed is not None:
        d["seed"] = _seed(args.seed)
    if args.trials is not None:
        d["n_draws"] = args.trials
    if d.get("n_draws", 1) < 1:
        raise ValueError("need at least one channel draw")
    table = sum_rate_curves(workers=args.workers, **d)
    if args.format == "json":
        means = table.means()
        out = {"config": d, **{c: means[:, i] for i, c in enumerate(table.COLUMNS)}}
        _emit_json(out, args.out)
    else:
        _emit_csv(table.COLUMNS, ([f"{v:.6g}" for v in r] for r in table.means()), args.out)


def _run_budget(args) -> None:
    out = {}
    if args.alpha is None and args.drift_ppm is None:
        raise ValueError("give --alpha and/or --drift-ppm")
    if args.alpha is not None:
        out["dynamic_range_db"] = dynamic_range_budget(args.alpha)
    if args.drift_ppm is not None:
        drift, phase = drift_phase_budget(args.drift_ppm, args.frame_duration, args.carrier_hz)
        out["time_drift_s"] = drift
        out["phase_deg"] = phase
    _emit_json(out, args.out)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "budget":
            _run_budget(args)
        elif args.command == "sum-rate":
            _run_sum_rate(args)
        else:
            _run_experiment(args.command, args)
    except (ValueError, TypeError, OSError, RankError, DegenerateFitError, ConvergenceError) as exc:
        print(f"dmimo {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
