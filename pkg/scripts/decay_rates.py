"""Decay character against fitted heat-semigroup and nonlinear decay exponents."""
import argparse

import numpy as np

from cgllab.decay import decay_character, fit_decay_exponent, fit_power_law, predicted_gamma
from cgllab.evolution import FlowParams, StepControl, linear_heat_run, run
from cgllab.grid import Grid
from cgllab.ground_state import reference_constants
from cgllab.scenarios import InitialDataSpec, build_initial_data


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--N", type=int, default=128)
    p.add_argument("--L", type=float, default=128.0)
    p.add_argument("--k", type=float, nargs="+", default=[0.0, 1.0, 2.0])
    p.add_argument("--nonlinear", action="store_true", help="also run the small-data nonlinear flow")
    a = p.parse_args()
    g = Grid(3, a.N, a.L)
    t = np.geomspace(10.0, min(100.0, g.L**2 / 40), 40)
    print("k\tr*\tfit_r2\tslope(H1^2)\twant\tgamma_pred")
    for k in a.k:
        spec = InitialDataSpec("SpectralProfile", k=k, width=1.0,
                               hdot1=0.05 * reference_constants(3).gradW_norm)
        u0 = build_initial_data(spec, g).field
        est = decay_character(u0)
        slope, _ = fit_power_law(t, linear_heat_run(u0, 1.0, t) ** 2)
        line = f"{k:g}\t{est.r_star:.3f}\t{est.fit_r2:.4f}\t{slope:.3f}\t{-(1.5 + k + 1):.3f}" \
               f"\t{predicted_gamma(est.r_star).gamma:.3f}"
        if a.nonlinear:
            ctrl = StepControl(t_max=t[-1], dt_max=2.0, tol=1e-8, dt_out=0.05, out_growth=1.05, dt_out_max=2.0)
            fit = fit_decay_exponent(run(u0, FlowParams(1.0), ctrl), (t[0], t[-1]))
            line += f"\tgamma_hat={fit.gamma_hat:.3f}"
        print(line)


if __name__ == "__main__":
    main()
