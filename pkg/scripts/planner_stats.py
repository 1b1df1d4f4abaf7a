"""Solve the six preset tasks and print a solver statistics table.

    python3 scripts/planner_stats.py [--out stats.csv]
"""

import argparse
import csv

from leapplan import tasks
from leapplan.pipeline import plan_task
from leapplan.srb import ModelParams

COLUMNS = ["task", "n_t", "dt", "n_vars", "iterations", "status", "violation", "kkt", "wall_s"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", help="optional CSV file")
    args = ap.parse_args()

    rows = []
    for name in tasks.PRESETS:
        b = plan_task(tasks.preset(name), ModelParams())
        st = b.plan.stats
        rows.append(
            [name, b.task.n_t, b.task.dt, b.plan.X.size + b.plan.U.size, st["iterations"], st["status"],
             st["constraint_violation"], st["kkt_residual"], b.plan.wall_time]
        )  # fmt: skip
    print(f"{'task':18s} {'n_t':>4s} {'dt':>6s} {'vars':>5s} {'iter':>5s}  {'violation':>9s} {'KKT':>9s} {'wall':>7s}")
    for r in rows:
        print(f"{r[0]:18s} {r[1]:4d} {r[2]:6.3f} {r[3]:5d} {r[4]:5d}  {r[6]:9.1e} {r[7]:9.1e} {r[8]:6.2f}s")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(COLUMNS)
            w.writerows(rows)


if __name__ == "__main__":
    main()
