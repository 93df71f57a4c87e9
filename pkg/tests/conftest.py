import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("pkg", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pkg")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def trig_poly(rng, n, degree, channels=1):
    """Random band-limited matrix function on the N-node circle grid, plus its coefficients."""
    ks = np.arange(-degree, degree + 1)
    c = rng.normal(size=(len(ks), channels, channels)) + 1j * rng.normal(size=(len(ks), channels, channels))
    lam = np.exp(2j * np.pi * np.arange(n) / n)
    u = np.einsum("jk,kab->jab", lam[:, None] ** ks, c)
    return u, ks, c


_CRITERIA = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line; call it with (ok, detail) and it asserts ok."""
    t0 = time.perf_counter()
    name = request.node.name

    def report(ok, detail):
        _CRITERIA.append((name, bool(ok), detail, time.perf_counter() - t0))
        assert ok, detail
    return report


def pytest_terminal_summary(terminalreporter):
    seen = {c[0] for c in _CRITERIA}
    # criteria that raised before reporting
    crashed = [r for r in terminalreporter.stats.get("failed", []) + terminalreporter.stats.get("error", [])
               if "test_acceptance" in r.nodeid and r.nodeid.split("::")[-1] not in seen]
    if not _CRITERIA and not crashed:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail, dt in _CRITERIA:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}: {detail} ({dt:.1f}s)")
    for r in crashed:
        terminalreporter.write_line(f"FAIL {r.nodeid.split('::')[-1]}: raised ({r.duration:.1f}s)")
