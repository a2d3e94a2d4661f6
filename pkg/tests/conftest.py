from pathlib import Path

import numpy as np
import pytest

from fireworks.config import load_config
from fireworks.kernels import KernelSet, family
from fireworks.phase_space import PhaseSpaceGrid
from fireworks.solver import picard_solve

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"


def scenario(name, **kw):
    return load_config(SCENARIOS / f"{name}.yaml", **kw)


@pytest.fixture(scope="session")
def small_grid():
    return PhaseSpaceGrid.uniform(1, (-6, 6), (-1, 1), 48, 17, 1.0, 33)


@pytest.fixture(scope="session")
def small_kernels():
    return KernelSet(family("constant", value=0.5), family("constant", value=1.0),
                     family("constant"),
                     family("separable-product", amplitude=0.5, x_width=1.0, v_center=0.2,
                            v_width=0.3))


@pytest.fixture(scope="session")
def default_cfg():
    return scenario("default")


@pytest.fixture(scope="session")
def default_solution(default_cfg):
    return picard_solve(default_cfg.kernels, default_cfg.grid, "J_plus", a=2.0, tol=1e-10)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


# acceptance verdicts, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
