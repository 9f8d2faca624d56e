import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from snlab import FlatNorm, euclidean, rotational

settings.register_profile("snlab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("snlab")


@pytest.fixture(scope="session")
def rot():
    """The test factor f(s) = cos(2 pi s) + 2."""
    return rotational(2.0, 1.0)


@pytest.fixture(scope="session")
def euc():
    return euclidean()


@pytest.fixture(scope="session")
def drift():
    return FlatNorm(np.eye(2), np.array([0.5, 0.0]))


ACCEPTANCE = pytest.StashKey[list]()


class Criterion:
    """Collects the checks of one acceptance criterion and its runtime."""

    def __init__(self, number, title, budget, sink):
        self.number, self.title, self.budget = number, title, budget
        self.sink = sink
        self.items = []
        self.done = False
        self.start = time.perf_counter()

    def check(self, name, ok, detail=""):
        self.items.append((name, bool(ok), detail))

    def finish(self):
        elapsed = time.perf_counter() - self.start
        in_time = elapsed <= self.budget
        ok = bool(self.items) and all(o for _, o, _ in self.items) and in_time
        detail = "; ".join(d for _, _, d in self.items)
        line = (f"{'PASS' if ok else 'FAIL'} criterion {self.number:2d} {self.title}: {detail}; "
                f"{elapsed:.1f} s of {self.budget} s")
        self.sink.append((self.number, line))
        self.done = True
        print(line)
        failed = [n for n, o, _ in self.items if not o] + ([] if in_time else ["runtime"])
        assert ok, f"failed checks: {failed}"


@pytest.fixture
def criterion(request):
    sink = request.config.stash.setdefault(ACCEPTANCE, [])
    made = []

    def make(number, title, budget):
        c = Criterion(number, title, budget, sink)
        made.append(c)
        return c

    yield make
    for c in made:
        if not c.done:
            sink.append((c.number, f"FAIL criterion {c.number:2d} {c.title}: raised before finishing"))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
