import numpy as np
import pytest

from topoflock.grid import TorusGrid
from topoflock.kernel import KernelParams, LatticeKernel
from topoflock.presets import band_limited


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def ws1d():
    return LatticeKernel(TorusGrid(1, 128), KernelParams(alpha=1.0, tau=1.0))


@pytest.fixture(scope="session")
def ws2d():
    return LatticeKernel(TorusGrid(2, 16), KernelParams(alpha=1.0, tau=1.0, r0=1.2))


def random_state(g, rng, kmax=4, rho_amp=0.4, u_amp=0.5):
    rho = 1 + rho_amp * band_limited(g, kmax, rng)
    u = u_amp * np.stack([band_limited(g, kmax, rng) for _ in range(g.dim)])
    return rho, u


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
