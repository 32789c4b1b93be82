import numpy as np
import pytest

from fedelicit.bound import BoundInputs
from fedelicit.mechanism import CostProfile


def random_setting(rng: np.random.Generator, N: int = 5, H: int | None = None):
    """Random but valid bound constants and costs."""
    L = rng.uniform(0.5, 5.0)
    mu = L * rng.uniform(0.05, 1.0)
    eta = rng.uniform(0.1, 1.0) / (2 * L)
    T = int(rng.integers(1, 200))
    H = int(rng.integers(1, 4)) if H is None else H
    b = BoundInputs(L=L, mu=mu, eta=eta, T=T, H=H, beta=rng.uniform(0.1, 10), G_sq=rng.uniform(0, 5),
                    init_dist_sq=rng.uniform(0, 10), p=rng.dirichlet(np.ones(N)),
                    sigma_sq=rng.uniform(0.1, 20, N), d=rng.uniform(0, 0.5, N))
    costs = CostProfile(c_l=rng.uniform(0, 2), c_p=rng.uniform(1e-4, 1e-2, N))
    return b, costs


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# filled by test_acceptance; one line per criterion in the terminal summary
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
