import numpy as np
import pytest

from bpinn_ageing.thermal_model import TimeSeriesProfile


def constant_profile(theta_A=20.0, theta_TO=60.0, K=0.0, n=11, dt=60.0):
    t = dt * np.arange(n)
    return TimeSeriesProfile(t, np.full(n, K), np.full(n, theta_A), np.full(n, theta_TO))


@pytest.fixture
def flat_profile():
    return constant_profile()


@pytest.fixture
def ramp_profile():
    n = 61
    t = 60.0 * np.arange(n)
    K = 0.5 + 0.5 * np.sin(np.linspace(0, np.pi, n))
    ta = 20.0 + np.linspace(0, 5, n)
    tto = ta + 30.0 + 10 * K
    return TimeSeriesProfile(t, K, ta, tto)


_CRITERIA = {}


class CriterionRecorder:
    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title

    def check(self, ok: bool, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {self.number:>2}: {self.title}: {detail}"
        _CRITERIA[self.number] = line
        print(line)
        assert ok, line


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("criterion")
    number, title = marker.args
    _CRITERIA.setdefault(number, f"[FAIL] criterion {number:>2}: {title}: did not finish")
    return CriterionRecorder(number, title)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion reported in the summary")


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
