"""Force-displacement curves of the notched plane-strain specimen.

Compares mesh levels for one model, optionally in the local mode where the
nonlocal fields are switched off and the result depends on the mesh.

    python demos/notched.py --model C --levels coarse fine
    python demos/notched.py --local --levels coarse medium fine
    python demos/notched.py --model A --active 0 0 0 1 0 0
"""
import argparse
import time

import numpy as np

from anisodamage.scenarios import MESH_LEVELS, preset_notched, run_study


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model", default="C", choices=["A", "B", "C"])
    ap.add_argument("--levels", nargs="+", default=["coarse"], choices=MESH_LEVELS)
    ap.add_argument("--local", action="store_true")
    ap.add_argument("--active", type=int, nargs="+",
                    help="0/1 mask over the nonlocal tuple (all active by default)")
    ap.add_argument("--steps", type=int, default=100)
    ap.add_argument("--u-max", type=float, default=3.0)
    ap.add_argument("--out", default="runs")
    args = ap.parse_args()

    for level in args.levels:
        active = None if args.active is None else [bool(a) for a in args.active]
        cfg = preset_notched(level, args.model, local=args.local, active=active,
                             steps=args.steps, u_max=args.u_max)
        if active is not None:
            cfg.name += "-mask" + "".join(str(int(a)) for a in active)
        t0 = time.perf_counter()

        def progress(k, n, rec):
            if (k + 1) % 10 == 0:
                print(f"  {cfg.name} step {k + 1}/{n}: u = {rec.displacement:.3f} mm, "
                      f"F = {rec.force:.1f} N ({time.perf_counter() - t0:.0f} s)", flush=True)

        res = run_study(cfg, f"{args.out}/{cfg.name}", progress=progress)
        k = int(np.argmax(np.abs(res.force)))
        print(f"{cfg.name}: {res.solver.system.mesh.n_elements} elements, peak "
              f"{res.peak():.1f} N at u = {res.displacement[k]:.3f} mm, dissipated "
              f"{res.dissipated_energy():.1f} N mm, {res.wall_time:.0f} s")


if __name__ == "__main__":
    main()
