import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vmfp.fields import Background, FieldState
from vmfp.kinetic import SimState
from vmfp.phase_space import DistField, PhaseGrid

settings.register_profile(
    "vmfp", max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("vmfp")

# filled by test_acceptance, echoed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)


@pytest.fixture
def small_grid():
    return PhaseGrid(16, 4.0, 16, 6.0)


def maxwellian_state(grid, amp=0.1, u2=0.0, e2=0.0, b=0.0):
    """Perturbed Maxwellian with a neutralising background and consistent E1."""
    from vmfp.fields import e1_from_density
    from vmfp.phase_space import moment_density

    v1, v2 = grid.vmesh()
    kx = 2 * np.pi * grid.x / grid.x_len
    prof = np.exp(-(v1**2 + (v2 - u2) ** 2) / 2) / (2 * np.pi)
    f = DistField(grid, (1 + amp * np.cos(kx))[:, None, None] * prof[None])
    rho = moment_density(f)
    phi = np.full(grid.nx, rho.mean())
    E1 = e1_from_density(rho - phi, grid.dx)
    fs = FieldState(E1, e2 * np.sin(kx), b * np.cos(kx))
    return SimState(0.0, f, fs, Background(phi))


@pytest.fixture
def small_state(small_grid):
    return maxwellian_state(small_grid, u2=0.5, e2=0.05, b=0.05)
