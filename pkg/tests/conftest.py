import numpy as np
import pytest

from meanfield.grid import field_from_function, make_grid, norm

ACCEPTANCE_LINES: list[str] = []


def normalized(f):
    return f.with_values(f.values / norm(f))


def gaussian(grid, width=1.0, center=0.0):
    return normalized(
        field_from_function(grid, lambda *xs: np.exp(-sum((x - center) ** 2 for x in xs) / (2 * width**2)))
    )


def free_gaussian_exact(grid, width, t):
    """Closed-form solution of ``i u_t = -Lap u`` from a normalized Gaussian.

    ``i u_t = -u_xx`` is the heat equation with diffusion ``i``, so the
    variance parameter evolves as ``s = width^2 + 2 i t``.
    """
    d = grid.dim
    amp = (np.pi * width**2) ** (-d / 4)
    s = width**2 + 2j * t
    return field_from_function(
        grid, lambda *xs: amp * (width**2 / s) ** (d / 2) * np.exp(-sum(x**2 for x in xs) / (2 * s))
    )


@pytest.fixture
def grid1d():
    return make_grid(1, 256, 64.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
