#!/usr/bin/env python3
"""Optimize the contention-preamble split for a mixed device population.

Prints the per-split objective table and the argmin for several shares of
event-driven devices among the two-step population, plus the feasibility
boundary (smallest four-step pool keeping the failure probability under
the reliability target).
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from ralab import analysis
from ralab.analysis import FourStepParams, TwoStepParams


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n-fourstep", type=int, default=23_000)
    parser.add_argument("--fourstep-rate", type=float, default=0.5,
                        help="packets per second per four-step device")
    parser.add_argument("--n-twostep", type=int, default=1_000)
    parser.add_argument("--event-rate", type=float, default=6.8,
                        help="packets per second per event device")
    parser.add_argument("--event-shares", type=float, nargs="+",
                        default=[0.3, 0.5, 0.7])
    parser.add_argument("--pool", type=int, default=54)
    parser.add_argument("--p-fail-max", type=float, default=1e-7)
    parser.add_argument("--table", action="store_true",
                        help="print the full objective table per share")
    args = parser.parse_args()

    for share in args.event_shares:
        fp = FourStepParams(n_ue=args.n_fourstep,
                            rate_per_ms=args.fourstep_rate / 1000.0,
                            n_cb=args.pool)
        tp = TwoStepParams(n_ue=args.n_twostep,
                           n_event=int(share * args.n_twostep),
                           rate_per_ms=args.event_rate / 1000.0,
                           t_p=3, n_cr=4)
        result = analysis.optimize_preamble_split(
            fp, tp, n_pool=args.pool, p_fail_max=args.p_fail_max)
        feasible = [p for p in result.points if p.feasible]
        best = result.point(result.best_n_cr)
        print(f"event share {share}: n_cr* = {result.best_n_cr} "
              f"(n_cb = {best.n_cb}), objective {best.objective:.4f} "
              f"signals/ms, boundary min n_cb = {min(p.n_cb for p in feasible)}")
        if args.table:
            print("  n_cr  n_cb  feasible  p_fail        objective")
            for p in result.points:
                print(f"  {p.n_cr:>4}  {p.n_cb:>4}  {str(p.feasible):>8}  "
                      f"{p.p_fail:.6e}  {p.objective:.6f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
