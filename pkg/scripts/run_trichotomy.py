"""Threshold-energy trichotomy: W, below-W and above-W kinetic energy at E = E(W)."""
import argparse
from pathlib import Path

from cgllab.cli import write_suite
from cgllab.scenarios import trichotomy_suite


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--z", type=complex, default=1 + 0j)
    p.add_argument("--lam", type=float, default=3.0)
    p.add_argument("--out", type=Path, default=Path("trichotomy_out"))
    a = p.parse_args()
    a.out.mkdir(parents=True, exist_ok=True)
    reports = trichotomy_suite(a.d, a.z, lam=a.lam)
    write_suite(reports, a.out, "trichotomy")
    for r in reports:
        print(f"{r.scenario_id}\t{r.verdict}\tE/E(W)-1={r.energy_ratio - 1:+.1e}\tK/K(W)={r.kinetic_ratio:.4f}")


if __name__ == "__main__":
    main()
