"""Open loop vs tracking on the 180 degree spin with a heavier plant.

Writes one trace CSV per mode and prints the yaw history at liftoff and
touchdown.

    python3 scripts/spin_comparison.py [--mass-scale 1.1] [--out out/spin_compare]
"""

import argparse
from pathlib import Path

import numpy as np

from leapplan import tasks
from leapplan.pipeline import make_gains, plan_task, simulate
from leapplan.sim import Perturbation, final_yaw_error
from leapplan.srb import ModelParams


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mass-scale", type=float, default=1.1)
    ap.add_argument("--foot-noise", type=float, default=0.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="out/spin_compare")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bundle = plan_task(tasks.spin(), ModelParams())
    gains = make_gains(bundle)
    pert = Perturbation(mass_scale=args.mass_scale, foot_noise=args.foot_noise, seed=args.seed)
    for mode in ("open_loop", "vboc"):
        trace, m = simulate(bundle, gains, mode, pert)
        trace.write_csv(out / f"trace_{mode}.csv")
        yaw_lo = np.rad2deg(trace.liftoff.vector()[5])
        err = np.rad2deg(final_yaw_error(trace, np.pi))
        print(
            f"{mode:9s}  yaw at liftoff {yaw_lo:7.2f} deg, final yaw error {err:6.2f} deg, "
            f"attitude error {np.rad2deg(m['attitude_error']):6.2f} deg -> {m['status']}"
        )


if __name__ == "__main__":
    main()
