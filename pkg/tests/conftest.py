import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dczip.model import BlockParams, sample_network

settings.register_profile(
    "repo", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


def two_block(n, lam_in, lam_out, p_in, p_out, pi=(0.5, 0.5), mu=None, nu=None):
    Lam = np.array([[lam_in, lam_out], [lam_out, lam_in]], dtype=float)
    P = np.array([[p_in, p_out], [p_out, p_in]], dtype=float)
    return BlockParams.from_blocks(np.asarray(pi, dtype=float), P, Lam, n, mu=mu, nu=nu)


def random_params(rng, n, K, dc=True, p_range=(0.1, 0.7), lam_range=(1.0, 6.0)):
    P = rng.uniform(*p_range, (K, K))
    Lam = rng.uniform(*lam_range, (K, K))
    P = (P + P.T) / 2
    Lam = (Lam + Lam.T) / 2
    pi = rng.dirichlet(np.full(K, 5.0))
    if dc:
        mu = rng.lognormal(0.0, 0.4, n)
        nu = rng.lognormal(0.0, 0.4, n)
        return BlockParams(pi, P, Lam, mu / mu.mean(), nu / nu.mean(), "local", True)
    return BlockParams.from_blocks(pi, P, Lam, n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def planted():
    """Two-block network with a clear separation and its planted partition."""
    params = two_block(40, 10.0, 1.0, 0.3, 0.3)
    A, Z = sample_network(params, 40, 3)
    return A, Z, params


# one line per acceptance criterion, echoed after the test session
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:])):
        terminalreporter.write_line(ACCEPTANCE[key])
