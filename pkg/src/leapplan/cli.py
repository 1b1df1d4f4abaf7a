"""Command-line front end: ``leapplan {plan,gains,simulate,study}``.

Exit codes: 0 success, 1 runtime or solver failure, 2 config or usage error.
Set ``LEAPPLAN_LOG`` (DEBUG, INFO, WARNING, ...) for log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import pipeline, store
from .config import load_config
from .errors import ConfigError, LeapPlanError
from .sim import MODES, Perturbation
from .vbl import halving_delta

log = logging.getLogger("leapplan")


def _setup_logging():
    level = os.environ.get("LEAPPLAN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def cmd_plan(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out or cfg.output_dir)
    bundle = pipeline.plan_task(cfg.task, cfg.params, cfg.solver)
    path = out / "plan.json"
    store.save_plan(path, bundle)
    st = bundle.plan.stats
    print(
        f"plan: {st['status']} in {st['iterations']} iterations, violation {st['constraint_violation']:.2e}, "
        f"KKT {st['kkt_residual']:.2e}, {bundle.plan.wall_time:.2f} s -> {path}"
    )
    if st["status"] != "converged" or not bundle.plan.report.passed:
        print("plan: solver did not reach the requested tolerances", file=sys.stderr)
        return 1
    return 0


def cmd_gains(args) -> int:
    bundle = store.load_plan(args.plan)
    weights, substeps = None, pipeline.RK4_SUBSTEPS
    if args.config:
        cfg = load_config(args.config)
        weights, substeps = cfg.tracking, cfg.substeps
    t0 = time.perf_counter()
    gains = pipeline.make_gains(bundle, weights, substeps)
    wall = time.perf_counter() - t0
    gains.check()
    checks = {"knots": int(gains.t.size), "psd": True}
    if args.check_halving:
        checks["halving_delta"] = halving_delta(gains)
    path = Path(args.out) if args.out else Path(args.plan).with_name("gains.json")
    store.save_gains(path, gains, checks, {"riccati_wall_time": wall})
    msg = f"gains: {gains.t.size} knots at {gains.grid_dt:g} s"
    if "halving_delta" in checks:
        msg += f", step-halving delta {checks['halving_delta']:.2e}"
    print(f"{msg} -> {path}")
    return 0


def cmd_simulate(args, parser) -> int:
    if args.mode == "vboc" and not args.gains:
        parser.error("--gains is required for --mode vboc")
    bundle = store.load_plan(args.plan)
    pert = Perturbation()
    if args.config:
        pert = load_config(args.config).perturbation
    if args.seed is not None:
        pert = replace(pert, seed=args.seed)
    if args.gains:
        gains = store.load_gains(args.gains)
    else:
        gains = pipeline.make_gains(bundle)
    trace, metrics = pipeline.simulate(bundle, gains, args.mode, pert)
    metrics["perturbation"] = pert.to_dict()
    out = Path(args.out) if args.out else Path(args.plan).parent
    out.mkdir(parents=True, exist_ok=True)
    trace.write_csv(out / f"trace_{args.mode}.csv")
    store.write_json(out / f"metrics_{args.mode}.json", metrics)
    print(
        f"simulate[{args.mode}]: {metrics['status']}, horizontal landing error "
        f"{metrics.get('horizontal_error', float('nan')):.4f} m, attitude error "
        f"{metrics.get('attitude_error', float('nan')):.4f} rad"
    )
    return 0


def cmd_study(args) -> int:
    cfg = load_config(args.config)
    if cfg.study is None:
        raise ConfigError("config has no 'study' block")
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    rows, summary = pipeline.run_study(cfg)
    with open(out / "study.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(pipeline.STUDY_COLUMNS)
        w.writerows(pipeline.study_rows_flat(rows))
    if cfg.study.write_traces:
        (out / "traces").mkdir(exist_ok=True)
        for r in rows:
            if r["trace"] is not None:
                r["trace"].write_csv(out / "traces" / f"trial{r['trial']:03d}_{r['mode']}.csv")
    store.write_json(out / "summary.json", summary)
    store.write_timing(out / "summary.json", {"study_wall_time": time.perf_counter() - t0})
    for mode in ("open_loop", "vboc"):
        s = summary[mode]
        print(
            f"study[{mode}]: {s['n_ok']} ok, {s['n_failed']} failed, mean relative error "
            f"{100 * s['mean_relative_error']:.2f}%, mean along-track {s['mean_along_track']:+.4f} m"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="leapplan", description="Plan and track quadruped aerial motions.")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("plan", help="solve the takeoff trajectory for a config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", help="output directory (default: output.dir from the config)")

    sg = sub.add_parser("gains", help="linearize a plan and integrate the Riccati equation")
    sg.add_argument("--plan", required=True)
    sg.add_argument("--config", help="config whose tracking block sets the weights")
    sg.add_argument("--out", help="gains file (default: gains.json next to the plan)")
    sg.add_argument("--check-halving", action="store_true", help="report the step-halving delta of P(0)")

    ss = sub.add_parser("simulate", help="closed-loop takeoff and flight")
    ss.add_argument("--plan", required=True)
    ss.add_argument("--gains")
    ss.add_argument("--mode", choices=MODES, required=True)
    ss.add_argument("--seed", type=int)
    ss.add_argument("--config", help="config whose perturbation block is applied")
    ss.add_argument("--out", help="output directory (default: the plan's directory)")

    st = sub.add_parser("study", help="landing-error study over distances and seeds")
    st.add_argument("--config", required=True)
    st.add_argument("--out")
    return p


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "plan":
            return cmd_plan(args)
        if args.command == "gains":
            return cmd_gains(args)
        if args.command == "simulate":
            return cmd_simulate(args, parser)
        return cmd_study(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (store.SchemaError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except LeapPlanError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
