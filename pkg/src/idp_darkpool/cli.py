"""Command-line entry points.

``idp-darkpool`` runs auction experiments and writes CSV rows;
``idp-darkpool-audit`` runs the privacy checks and writes audit CSVs.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys

from idp_darkpool import audit
from idp_darkpool.experiment import CSV_FIELDS, SWEEPS, ExperimentConfig, run_experiment
from idp_darkpool.plotting import figure_path, plot_calibration, plot_sweep
from idp_darkpool.transcript import Transcript


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="idp-darkpool", description="Run private dark-pool auction experiments.")
    p.add_argument("--clients", type=int, default=4)
    p.add_argument("--orders-per-client", type=int, default=8)
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--Z", type=int, default=None, help="explicit even noise support bound")
    p.add_argument("--network", choices=["local", "global", "world"], default="local")
    p.add_argument("--mode", choices=["idp", "nonprivate"], default="idp")
    p.add_argument("--workload", choices=["paper", "geometric"], default="paper")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sweep", choices=SWEEPS, default=None)
    p.add_argument("--max-orders", type=int, default=2**15, help="largest total order count in fig4 sweeps")
    p.add_argument("--mix-sides", action="store_true", help="draw the side of every node independently")
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.add_argument("--plot", action="store_true", help="also render a PNG next to --out")
    p.add_argument("--dump-transcript", default=None, help="JSON-lines transcript of the last IDP run")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if not -(2**63) <= args.seed < 2**64:
        print("error: --seed must fit in 64 bits", file=sys.stderr)
        return 2
    try:
        cfg = ExperimentConfig(
            clients=args.clients, orders_per_client=args.orders_per_client, epsilon=args.epsilon,
            delta=args.delta, network=args.network, mode=args.mode, workload=args.workload,
            seed=args.seed, out=args.out, mix_sides=args.mix_sides, Z=args.Z,
        )
        rows = run_experiment(cfg, args.sweep, args.max_orders, args.dump_transcript)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.out is None:
        writer = csv.DictWriter(sys.stdout, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    elif args.plot:
        plot_sweep(rows, figure_path(args.out), title=args.sweep or "")
    return 0


def build_audit_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="idp-darkpool-audit", description="Privacy audits of the auction.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("coupled", help="run coupled neighbouring auctions and classify their transcripts")
    c.add_argument("--runs", type=int, default=1000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True)

    k = sub.add_parser("calibrate", help="exact divergence of the shifted geometric noise")
    k.add_argument("--epsilon", type=float, nargs="+", default=[0.5, 1.0, math.log(2)])
    k.add_argument("--delta", type=float, nargs="+", default=[1e-3, 1e-6, 1e-2])
    k.add_argument("--out", required=True)
    k.add_argument("--plot", action="store_true")

    m = sub.add_parser("compare", help="classify two transcript dumps of neighbouring runs")
    m.add_argument("t0")
    m.add_argument("t1")
    m.add_argument("--target-handle", required=True)
    m.add_argument("--n0", type=int, required=True)
    return p


def audit_main(argv=None) -> int:
    args = build_audit_parser().parse_args(argv)
    if args.command == "coupled":
        records = audit.audit_many(args.runs, args.seed)
        audit.write_audit_csv(args.out, records)
        summary = audit.summarize(records)
        print(",".join(f"{k}={v}" for k, v in summary.items()))
        return 1 if summary["violations"] else 0
    if args.command == "calibrate":
        checks = [audit.verify_geom_shift_dp(e, d) for e in args.epsilon for d in args.delta]
        audit.write_calibration_csv(args.out, checks)
        if args.plot:
            plot_calibration(checks, figure_path(args.out))
        for c in checks:
            print(f"epsilon={c.epsilon:.6g} delta={c.delta:.3g} Z={c.Z} divergence={c.divergence:.6g} "
                  f"{'pass' if c.passed else 'FAIL'}")
        return 0 if all(c.passed for c in checks) else 1
    t0, t1 = Transcript.load(args.t0), Transcript.load(args.t1)
    verdict = _compare(t0, t1, args.target_handle, args.n0)
    print(f"{verdict.kind},{verdict.prefix_length},{verdict.executed_in_prefix}")
    return 1 if verdict.is_violation else 0


def _compare(t0, t1, handle: str, n0: int) -> audit.IndifferenceVerdict:
    cfg = _HandleOnly(handle, n0)
    return audit.check_indifference(t0, t1, cfg)


class _HandleOnly:
    """Stand-in for a coupled-run config when only the dumps are at hand."""

    def __init__(self, handle: str, n0: int):
        self.target_handle = handle
        self.n0 = n0


if __name__ == "__main__":
    sys.exit(main())
