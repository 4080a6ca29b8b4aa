import numpy as np
import pytest

from nfsparse import geometry
from nfsparse.optimizer import optimize_nsa

LAM = 0.01
N = 33
B_MAX = 0.05

_acceptance: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        num, title = marker.args
        entry = _acceptance.setdefault(num, {"title": title, "passed": True, "ran": 0})
        entry["ran"] += 1
        entry["passed"] = entry["passed"] and rep.passed


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_acceptance):
        e = _acceptance[num]
        status = "PASS" if e["passed"] else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d} {status}  {e['title']}")


@pytest.fixture(scope="session")
def nsa10():
    """Optimized 33-antenna NSA on the p = 10 panel (memoized by the optimizer)."""
    layout, _ = optimize_nsa(N, 10, LAM, B_MAX)
    return layout


@pytest.fixture(scope="session")
def usa5():
    return geometry.build_usa(N, 5, LAM)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
