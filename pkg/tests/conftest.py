import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lieinfo import density as dn
from lieinfo.quadrature import so3_grid

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def grid8():
    return so3_grid(8)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture(scope="session")
def so3_pair(grid8):
    r = np.random.default_rng(7)
    return dn.random_bandlimited(grid8, r), dn.random_bandlimited(grid8, r)


@pytest.fixture(scope="session")
def acceptance(request):
    """Collects one (ok, detail) entry per acceptance criterion for the summary."""
    if not hasattr(request.config, "_lieinfo_acceptance"):
        request.config._lieinfo_acceptance = {}
    return request.config._lieinfo_acceptance


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_lieinfo_acceptance", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
