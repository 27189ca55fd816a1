"""ScaledW(c) dichotomy suite; writes JSONL reports and a CSV summary."""
import argparse
from pathlib import Path

from cgllab.cli import write_suite
from cgllab.scenarios import dichotomy_control, dichotomy_suite


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--z", type=complex, nargs="+", default=[1 + 0j, 1 + 1j])
    p.add_argument("--c", type=float, nargs="+", default=[0.5, 0.8, 1.1, 1.2])
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--t-max", type=float, default=400.0)
    p.add_argument("--out", type=Path, default=Path("dichotomy_out"))
    a = p.parse_args()
    a.out.mkdir(parents=True, exist_ok=True)
    reports = []
    for z in a.z:
        reports += dichotomy_suite(a.d, z, a.c, lam=a.lam, ctrl=dichotomy_control(a.t_max))
    write_suite(reports, a.out, "dichotomy")
    for r in reports:
        ratio = r.evidence["h1_final"] / r.evidence["h1_initial"]
        print(f"{r.scenario_id}\t{r.verdict}\tE/E(W)={r.energy_ratio:.4f}\tH1 final/initial={ratio:.2e}")


if __name__ == "__main__":
    main()
