import numpy as np
import pytest

from artifact.birman_schwinger import continuous_projection, exceptional_scan, split_potential
from artifact.grid import Grid3, GridFunction, well_scenario

ACCEPTANCE_LINES: list = []


def gaussian(grid: Grid3, width: float = 1.0, center=(0.0, 0.0, 0.0), components: int = 1) -> GridFunction:
    vals = np.zeros((components,) + grid.shape, dtype=np.complex128)
    vals[0] = np.exp(-grid.radius(center) ** 2 / (2 * width * width))
    return GridFunction(grid, vals)


@pytest.fixture(scope="session")
def small_well():
    """c = 4 well on a coarse grid: scenario, factors, scan and projection."""
    scn = well_scenario(4.0, n=32, L=16.0)
    pf = split_potential(scn)
    scan = exceptional_scan(pf, (-3.0, -0.001), 40)
    proj = continuous_projection(pf, scan)
    return scn, pf, scan, proj


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line[1])
