import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


def random_symmetric(rng, n, scale=1.0):
    A = rng.standard_normal((n, n)) * scale
    return 0.5 * (A + A.T)


def random_admissible(rng, n, k, margin=0.05):
    """Rotated spectrum drawn until it sits inside the cone with sigma_k > margin."""
    from hessianlab import symfun
    while True:
        lam = rng.standard_normal(n) + 1.0
        if symfun.in_gamma(lam, k) and symfun.sigma_elem(lam, k) > margin:
            Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
            return (Q * lam) @ Q.T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed at the end of the session
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
