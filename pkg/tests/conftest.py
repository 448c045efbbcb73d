import numpy as np
import pytest

from lowrank_gw.model import Grid, build_coulomb, build_synthetic_system

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def explicit_dft_matrix(dims):
    """Unitary DFT matrix built from exp(-2 pi i k.n / N) entry by entry."""
    idx = np.array(np.meshgrid(*[np.arange(n) for n in dims], indexing="ij")).reshape(3, -1).T
    phase = np.zeros((idx.shape[0], idx.shape[0]))
    for a, n in enumerate(dims):
        phase += np.outer(idx[:, a], idx[:, a]) / n
    return np.exp(-2j * np.pi * phase) / np.sqrt(idx.shape[0])


def explicit_coulomb_matrix(grid):
    """Dense periodic Coulomb operator from wrapped integer G vectors and an explicit DFT."""
    dims = grid.dims
    idx = np.array(np.meshgrid(*[np.arange(n) for n in dims], indexing="ij")).reshape(3, -1).T
    g2 = np.zeros(idx.shape[0])
    for a, (n, length) in enumerate(zip(dims, grid.cell_lengths)):
        m = np.where(idx[:, a] < (n + 1) // 2, idx[:, a], idx[:, a] - n)
        g2 += (2 * np.pi * m / length) ** 2
    v = np.where(g2 > 0, 4 * np.pi / np.where(g2 > 0, g2, 1.0), 0.0)
    F = explicit_dft_matrix(dims)
    return (F.conj().T @ (v[:, None] * F)).real


@pytest.fixture(scope="session")
def tiny_es():
    return build_synthetic_system(3, Grid((4, 4, 4), (5.0, 5.0, 5.0)), 2, 2, 0.3, 1.5)


@pytest.fixture(scope="session")
def small_es():
    return build_synthetic_system(1, Grid((4, 4, 8), (5.13, 5.13, 10.26)), 4, 4, 0.2, 1.8)


@pytest.fixture(scope="session")
def si8_es():
    return build_synthetic_system(1, Grid((8, 8, 8), (10.26,) * 3), 16, 16, 0.2, 1.8)


@pytest.fixture(scope="session")
def si8_V(si8_es):
    return build_coulomb(si8_es.grid)
