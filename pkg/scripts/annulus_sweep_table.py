"""Annulus sweep for the logarithmic counterexample, exact and mollified.

    python3 scripts/annulus_sweep_table.py --radii 2,4,...,1024 --epsilon 0.1
"""

import argparse
import math

from heisenberg_iso.cli import parse_number_list
from heisenberg_iso.isoperimetry import example46_sweep
from heisenberg_iso.quadrature import QuadratureSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--radii", default="2,4,...,1024")
    ap.add_argument("--epsilon", type=float, default=0.1, help="bump width; 0 skips the mollified sweep")
    ap.add_argument("--mollified-from", type=float, default=4.0)
    ap.add_argument("--rel-tol", type=float, default=1e-6)
    args = ap.parse_args()
    radii = parse_number_list(args.radii, "radii")
    quad = QuadratureSpec(rel_tol=args.rel_tol)

    sweeps = [("rho^-4", example46_sweep(radii, None, quad), radii)]
    if args.epsilon > 0:
        mr = [r for r in radii if r >= args.mollified_from]
        sweeps.append((f"exp(4u_eps), eps={args.epsilon:g}", example46_sweep(mr, args.epsilon, quad), mr))

    for label, sweep, rr in sweeps:
        print(f"\n{label}   fitted d(volume)/d(ln R) / 2pi^2 = {sweep.log_slope / (2 * math.pi**2):.6f}")
        print(f"{'R':>8} {'volume':>14} {'2pi^2 ln R':>14} {'perimeter':>12} {'quotient':>12}")
        for R, row in zip(rr, sweep.rows):
            print(f"{R:8g} {row.weighted_volume:14.6f} {2 * math.pi**2 * math.log(R):14.6f} "
                  f"{row.weighted_perimeter:12.6f} {row.quotient:12.6f}")


if __name__ == "__main__":
    main()
