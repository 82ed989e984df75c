import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_physical_cov(rng, n_modes, n_classical=0, mix=0.3):
    """Random covariance of ``n_modes`` mixed modes plus classical rows, cov convention."""
    from scipy.linalg import expm

    n = 2 * n_modes
    omega = np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))
    H = rng.normal(size=(n, n))
    H = 0.5 * (H + H.T)
    S = expm(0.4 * omega @ H)  # symplectic
    thermal = np.diag(np.repeat(1.0 + mix * rng.random(n_modes), 2))
    quantum = S @ thermal @ S.T
    cov = np.zeros((n + n_classical, n + n_classical))
    cov[:n, :n] = quantum
    if n_classical:
        X = rng.normal(size=(n + n_classical, n_classical))
        cov += X @ X.T * 0.5
    return 0.5 * (cov + cov.T)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[number])
