"""Bisect the discrete threshold c* along the ray c W on a given box."""
import argparse
import json

from cgllab.grid import Grid
from cgllab.scenarios import calibrate_threshold, default_grid


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--N", type=int)
    p.add_argument("--L", type=float)
    p.add_argument("--z", type=complex, default=1 + 1j)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--t-max", type=float, default=10.0)
    a = p.parse_args()
    dg = default_grid(a.d)
    g = Grid(a.d, a.N or dg.N, a.L or dg.L)
    out = calibrate_threshold(g, a.z, lam=a.lam, iterations=a.iterations, t_max=a.t_max)
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
