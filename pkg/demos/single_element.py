"""Peak retention force of one element under the four load modes.

Runs tension, uniaxial strain, simple shear and torsion for several mixture
weights and prints the peaks and the ratios to uniaxial tension.

    python demos/single_element.py [--steps 100] [--out runs/single]
"""
import argparse

from anisodamage.scenarios import SINGLE_MODES, preset_single_element, run_study


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=100)
    ap.add_argument("--k-ani", type=float, nargs="+", default=[0.0, 0.33, 0.67, 1.0])
    ap.add_argument("--out", help="write one run directory per case below this path")
    args = ap.parse_args()

    print(f"{'mode':<16}" + "".join(f"{'k=' + format(k, 'g'):>12}" for k in args.k_ani))
    peaks = {}
    for mode in SINGLE_MODES:
        row = []
        for k in args.k_ani:
            cfg = preset_single_element(mode, k_ani=k, steps=args.steps)
            out = f"{args.out}/{cfg.name}" if args.out else None
            row.append(abs(run_study(cfg, out).peak()))
        peaks[mode] = row
        print(f"{mode:<16}" + "".join(f"{p:12.2f}" for p in row))
    t = peaks["tension"][-1]
    print(f"\nratios to tension at k_ani = {args.k_ani[-1]:g}: "
          f"uniaxial strain {peaks['uniaxial-strain'][-1] / t:.4f}, "
          f"simple shear {peaks['simple-shear'][-1] / t:.4f}")


if __name__ == "__main__":
    main()
