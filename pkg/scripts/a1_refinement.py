"""A1 estimates for rho^-kappa under successive refinement.

Each stage doubles the sample cloud, refines the radius grid and, for
non-integrable exponents, doubles the truncation depth around the identity.

    python3 scripts/a1_refinement.py --kappas 1,2,3,4 --stages 3
"""

import argparse
import time

from heisenberg_iso.cli import parse_number_list
from heisenberg_iso.quadrature import QuadratureSpec
from heisenberg_iso.weights import RadiusGrid, a1_constant, power_weight, sample_cloud


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kappas", default="1,2,3,4")
    ap.add_argument("--stages", type=int, default=3)
    ap.add_argument("--samples", type=int, default=4)
    ap.add_argument("--radii-count", type=int, default=9)
    ap.add_argument("--core-depth", type=int, default=15)
    ap.add_argument("--rel-tol", type=float, default=1e-4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    for kappa in parse_number_list(args.kappas, "kappas"):
        n, grid, depth, prev = args.samples, RadiusGrid(count=args.radii_count), args.core_depth, None
        print(f"\nkappa = {kappa:g}")
        print(f"{'stage':>5} {'samples':>8} {'radii':>6} {'depth':>6} {'estimate':>14} {'ratio':>8} {'secs':>7}")
        for stage in range(args.stages + 1):
            q = QuadratureSpec(rel_tol=args.rel_tol, seed=args.seed, divergence="truncate", core_depth=depth)
            t0 = time.perf_counter()
            est = a1_constant(power_weight(kappa), sample_cloud(n, args.seed), grid, q).estimate
            ratio = "" if prev is None else f"{est / prev:8.4f}"
            print(f"{stage:5d} {n:8d} {grid.count:6d} {depth:6d} {est:14.6f} {ratio:>8} {time.perf_counter() - t0:7.1f}")
            prev, n, grid, depth = est, 2 * n, grid.refined(), 2 * depth


if __name__ == "__main__":
    main()
