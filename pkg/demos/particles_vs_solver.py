"""Compare the particle simulation with the deterministic solver.

The particle count is kept small so the demo runs in a few seconds; the
standard errors shrink like ``1 / sqrt(n)``.

    python demos/particles_vs_solver.py [n_particles]
"""
import sys
from pathlib import Path

from fireworks.cli import compare_rows, monte_carlo
from fireworks.config import load_config
from fireworks.solver import picard_solve

ROOT = Path(__file__).resolve().parents[1]


def main(n=20000):
    cfg = load_config(ROOT / "scenarios" / "default.yaml", overrides=[f"mc.n_particles={n}"])
    f, _ = picard_solve(cfg.kernels, cfg.grid, "J_plus", tol=1e-10)
    tallies = monte_carlo(cfg, workers=4)
    print(f"{n} particles, seed {cfg.mc['seed']}")
    print("    t  observable   solver      particles   std err      z")
    for t, obs, _, det, mc, se, z in compare_rows(cfg, f, tallies):
        print(f"{t:5.2f}  {obs:9s} {det:10.5f}  {mc:10.5f}  {se:9.2e}  {z:6.2f}")
    print(f"particles still alive at T: {tallies[-1].n_alive}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 20000)
