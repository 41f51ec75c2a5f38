import numpy as np
import pytest

from nsdp.grid import BoundaryConditions, GridSpec, build_operators

ACCEPTANCE_LINES = []


def general_bc():
    """Non-trivial traces on every wall with zero net normal flux."""
    return BoundaryConditions(
        u_N=lambda s, t, a: (1.0 + a) * s * (1.0 - s),
        u_S=lambda s, t, a: 0.3 * np.sin(np.pi * s) + 0.0 * t,
        v_W=lambda s, t, a: 0.2 * a * np.sin(np.pi * s),
        v_E=lambda s, t, a: -0.1 * np.sin(2 * np.pi * s),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_grid():
    g = GridSpec(7, 6, b_x=1.0, b_y=1.2, r=80.0)
    return g, build_operators(g)


@pytest.fixture
def report_line():
    def add(label, ok, detail):
        ACCEPTANCE_LINES.append(f"{label}: {'PASS' if ok else 'FAIL'} | {detail}")
    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
