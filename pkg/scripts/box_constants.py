"""Ground-state integrals: R^d oracle, cube oracle and grid quadrature side by side."""
import argparse

from cgllab.grid import Grid, hdot1_norm
from cgllab.ground_state import (
    GroundStateParams,
    energy,
    make_W,
    potential_integral,
    reference_constants,
    stationary_residual,
)
from cgllab.scenarios import default_grid


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--d", type=int, nargs="+", default=[3, 4])
    p.add_argument("--lam", type=float, default=1.0)
    a = p.parse_args()
    for d in a.d:
        g = default_grid(d)
        W = make_W(g, GroundStateParams(lam=a.lam))
        rd = reference_constants(d, lam=a.lam)
        box = reference_constants(d, box_length=g.L, lam=a.lam)
        print(f"d={d} grid N={g.N} L={g.L} lam={a.lam}")
        print("quantity\tR^d\tcube\tgrid")
        print(f"|grad W|^2\t{rd.gradW_l2_sq:.6f}\t{box.gradW_l2_sq:.6f}\t{hdot1_norm(W) ** 2:.6f}")
        print(f"int W^p\t{rd.potential:.6f}\t{box.potential:.6f}\t{potential_integral(W):.6f}")
        print(f"E(W)\t{rd.energy_W:.6f}\t{box.energy_W:.6f}\t{energy(W):.6f}")
        print(f"stationary residual on the grid: {stationary_residual(W):.4f}")


if __name__ == "__main__":
    main()
