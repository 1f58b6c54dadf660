"""Command line: ``qcm compute | simulate | nic``.

Exit codes: 0 success, 1 configuration or input error, 2 estimation failure.
"""
from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import diagnostics, io, nic, simulation
from .errors import ConfigError, ParseError, QCMError
from .pipeline import PipelineConfig, default_threads, parse_grid, run


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _families(text: str) -> tuple[str, ...]:
    return tuple(f.strip().upper() for f in text.split(",") if f.strip())


def _add_common(p):
    p.add_argument("--pstar", type=float, default=0.1)
    p.add_argument("--grid", default="0.01:0.01:0.99")
    p.add_argument("--families", default="sav,as,ig,adap")
    p.add_argument("--constraint", choices=("check", "enforce"), default="check")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $QCM_THREADS or all cores)")
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="qcm", description="Quantiled conditional moments")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("compute", help="QCM series from a price or return file")
    c.add_argument("--input", required=True)
    c.add_argument("--mode", choices=("prices", "returns"), default="returns")
    c.add_argument("--timings", action="store_true", help="also write timings.json (not reproducible)")
    _add_common(c)

    s = sub.add_parser("simulate", help="Monte Carlo error study against known truth")
    s.add_argument("--dgp", choices=simulation.DGPS, required=True)
    s.add_argument("--case", type=int, choices=simulation.CASES, required=True)
    s.add_argument("--reps", type=int, default=100)
    s.add_argument("--length", type=int, default=1000)
    s.add_argument("--t-max", type=int, default=10, help="timepoints summarised (0 = all)")
    _add_common(s)

    n = sub.add_parser("nic", help="news impact curves of a computed QCM series")
    n.add_argument("--input", required=True)
    n.add_argument("--mode", choices=("prices", "returns"), default="returns")
    n.add_argument("--qcm", required=True)
    n.add_argument("--tar-order", type=int, required=True)
    n.add_argument("--prune", action="store_true", help="drop insignificant TAR coefficients")
    n.add_argument("--out", required=True)
    return ap


def _config(args) -> PipelineConfig:
    return PipelineConfig(grid=parse_grid(args.grid), families=_families(args.families),
                          p_star=args.pstar, constraint_policy=args.constraint, seed=args.seed)


def _threads(args) -> int:
    if args.threads is not None and args.threads < 1:
        raise ConfigError("--threads must be positive")
    return args.threads or default_threads()


def _require_file(path):
    if not os.path.isfile(path):
        raise ConfigError(f"input file not found: {path}")


def cmd_compute(args) -> None:
    _require_file(args.input)
    cfg = _config(args)
    threads = _threads(args)
    series_in = io.load_returns(args.input, args.mode)
    os.makedirs(args.out, exist_ok=True)
    t0 = time.perf_counter()
    qcm, report = run(series_in.values, cfg, threads)
    total = time.perf_counter() - t0
    io.write_qcm(os.path.join(args.out, "qcm.csv"), qcm, series_in.dates)
    io.write_dq_report(os.path.join(args.out, "dq_report.csv"), report.records)
    diagnostics.write_descriptive(os.path.join(args.out, "descriptive.csv"), {"y": series_in.values})
    io.write_json(os.path.join(args.out, "run.json"), {
        "command": "compute", "config": cfg.to_dict(), "input": os.path.abspath(args.input),
        "mode": args.mode, "n_obs": len(series_in), "n0": report.n0,
        "constraint_ok_share": float(np.mean(qcm.constraint_ok)),
    })
    if args.timings:
        io.write_json(os.path.join(args.out, "timings.json"),
                      {**report.timings, "total_s": total, "threads": threads})


def cmd_simulate(args) -> None:
    cfg = _config(args)
    threads = _threads(args)
    if args.reps < 1 or args.length < 100:
        raise ConfigError("--reps must be >= 1 and --length >= 100")
    os.makedirs(args.out, exist_ok=True)
    camp = simulation.run_campaign(args.dgp, args.case, reps=args.reps, T=args.length,
                                   seed=args.seed, cfg=cfg, threads=threads)
    t_max = args.t_max if args.t_max > 0 else args.length
    simulation.write_delta_summary(os.path.join(args.out, "delta_summary.csv"), [camp], t_max)
    io.write_json(os.path.join(args.out, "run.json"), {
        "command": "simulate", "config": cfg.to_dict(), "dgp": args.dgp, "case": args.case,
        "reps": args.reps, "length": args.length, "t_max": t_max,
        "constraint_ok_share": float(np.mean(camp.constraint_ok)),
    })


def cmd_nic(args) -> None:
    _require_file(args.input)
    _require_file(args.qcm)
    y = io.load_returns(args.input, args.mode)
    q = io.read_qcm(args.qcm)
    if q["h"].size != len(y):
        raise ConfigError(f"QCM table has {q['h'].size} rows but the series has {len(y)}")
    qcm = argparse.Namespace(h=q["h"], s=q["s"], k=q["k"])
    os.makedirs(args.out, exist_ok=True)
    study = nic.nic_study(y.values, qcm, args.tar_order, args.prune)
    nic.write_curves(args.out, study)
    nic.write_adjusted_r2(os.path.join(args.out, "adjusted_r2.csv"), study)
    p = study.tar.start
    res = diagnostics.validity_ttests(y.values[p:], study.tar.mu_hat,
                                      argparse.Namespace(h=q["h"][p:], s=q["s"][p:], k=q["k"][p:]))
    diagnostics.write_validity(os.path.join(args.out, "validity.csv"), {"y": res})
    io.write_json(os.path.join(args.out, "run.json"), {
        "command": "nic", "input": os.path.abspath(args.input), "qcm": os.path.abspath(args.qcm),
        "tar_order": args.tar_order, "prune": args.prune,
        "tar": {"coef_low": study.tar.coef_low.tolist(), "coef_high": study.tar.coef_high.tolist()},
    })


COMMANDS = {"compute": cmd_compute, "simulate": cmd_simulate, "nic": cmd_nic}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (ConfigError, ParseError, OSError) as exc:
        print(f"qcm: error: {exc}", file=sys.stderr)
        return 1
    except QCMError as exc:
        print(f"qcm: estimation failed: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
