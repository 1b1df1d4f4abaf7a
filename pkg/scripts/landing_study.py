"""Landing-error study with a per-distance breakdown.

Runs the study block of a config (default ``configs/study.yaml``), writes
``study.csv`` and prints mean relative and signed along-track errors per
distance and mode.

    python3 scripts/landing_study.py [--config configs/study.yaml] [--out out/study] [--workers N]
"""

import argparse
import csv
from dataclasses import replace
from pathlib import Path

import numpy as np

from leapplan.config import load_config
from leapplan.pipeline import STUDY_COLUMNS, run_study, study_rows_flat


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(Path(__file__).resolve().parents[1] / "configs" / "study.yaml"))
    ap.add_argument("--out", default="out/study")
    ap.add_argument("--workers", type=int)
    args = ap.parse_args()

    cfg = load_config(args.config)
    if args.workers:
        cfg.study = replace(cfg.study, workers=args.workers)
    rows, summary = run_study(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "study.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(STUDY_COLUMNS)
        w.writerows(study_rows_flat(rows))

    print(f"{'distance':>8s} {'mode':>10s} {'rel err':>8s} {'along (mm)':>11s} {'short':>6s}")
    for d in sorted({r["distance"] for r in rows}):
        for mode in ("open_loop", "vboc"):
            sel = [r for r in rows if r["distance"] == d and r["mode"] == mode and r["status"] == "ok"]
            rel = np.mean([r["relative_error"] for r in sel])
            along = np.array([r["along_track"] for r in sel])
            print(f"{d:8.3f} {mode:>10s} {100 * rel:7.2f}% {1000 * along.mean():+11.2f} {np.mean(along <= 0):6.0%}")
    for mode in ("open_loop", "vboc"):
        s = summary[mode]
        print(
            f"overall {mode:9s}: mean relative error {100 * s['mean_relative_error']:.2f}%, "
            f"mean along-track {1000 * s['mean_along_track']:+.2f} mm, {s['n_failed']} failed"
        )


if __name__ == "__main__":
    main()
