"""Sphere averages of the horizontal gradient and sub-Laplacian of a bump potential.

    python3 scripts/decay_study.py --epsilon 0.1 --radii 4,8,...,64
"""

import argparse

from heisenberg_iso.cli import decay_report, parse_number_list
from heisenberg_iso.group import Point
from heisenberg_iso.quadrature import QuadratureSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epsilon", type=float, default=0.1)
    ap.add_argument("--radii", default="4,8,...,64")
    ap.add_argument("--center", default="0,0,0")
    ap.add_argument("--sphere-rel-tol", type=float, default=1e-4)
    args = ap.parse_args()
    radii = parse_number_list(args.radii, "radii")
    center = Point(*parse_number_list(args.center, "center"))
    rep = decay_report(args.epsilon, radii, QuadratureSpec(), center, QuadratureSpec(rel_tol=args.sphere_rel_tol))
    print(f"{'r':>6} {'avg |grad_b v|':>16} {'avg |Delta_b v|':>16} {'avg |v|':>12}")
    for r, g, l, v in zip(rep["radii"], rep["grad"], rep["lap"], rep["abs_v"]):
        print(f"{r:6g} {g:16.8e} {l:16.8e} {v:12.6f}")
    print(f"log-log slope: gradient {rep['grad_slope']:.4f}, sub-Laplacian {rep['lap_slope']:.4f}")


if __name__ == "__main__":
    main()
