from __future__ import annotations

import numpy as np
import pytest

from softshed.model import DemandProfile, SupplySpec


def make(d, S):
    """Profile and absolute supply for a literal instance."""
    return DemandProfile.from_demands(d), SupplySpec(supply=S)


def random_instances(count, seed, n_max=500, shortfalls=(0.05, 0.10, 0.20, 0.40, 0.60, 0.95)):
    """Demands uniform(0.1, 10), N uniform on [1, n_max], shortfall cycled."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        n = int(rng.integers(1, n_max + 1))
        d = rng.uniform(0.1, 10.0, size=n)
        f = shortfalls[k % len(shortfalls)]
        profile = DemandProfile.from_demands(d)
        out.append((profile, SupplySpec(supply=(1 - f) * profile.total), f))
    return out


@pytest.fixture
def instance():
    return make


_criteria: dict[str, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion this test certifies")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marks = getattr(report, "criterion", None)
    if marks:
        _criteria.setdefault(marks, []).append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark:
        rep.criterion = mark.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcomes in _criteria.items():
        ok = all(o == "passed" for o in outcomes)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}")
