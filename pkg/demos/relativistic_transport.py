"""Free transport in momentum coordinates: every speed stays below one.

    python demos/relativistic_transport.py
"""
from pathlib import Path

import numpy as np

from fireworks.config import load_config
from fireworks.phase_space import l1_norm
from fireworks.solver import picard_solve

ROOT = Path(__file__).resolve().parents[1]


def centre_of_mass(values, grid):
    x = grid.x_mesh()[..., 0]
    return float(np.sum(values * x * grid.weights) / np.sum(values * grid.weights))


def main():
    for relativistic in (False, True):
        cfg = load_config(ROOT / "scenarios" / "relativistic.yaml",
                          overrides=[f"grid.relativistic={str(relativistic).lower()}",
                                     "kernels.gamma.value=0.0"])
        g = cfg.grid
        f, _ = picard_solve(cfg.kernels, g, "J_plus")
        label = "momentum p, speed p/sqrt(1+p^2)" if relativistic else "velocity xi = p"
        print(f"{label}: max speed {np.max(np.abs(g.speed())):.4f}")
        for t in (0.0, 2.0, 4.0):
            k = g.time_index(t)
            print(f"   t={t:3.1f}  mass {l1_norm(f.values[k], g):.4f}  "
                  f"centre of mass {centre_of_mass(f.values[k], g):+.4f}")


if __name__ == "__main__":
    main()
