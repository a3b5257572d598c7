import pytest

from adareg.integrate import integrate
from adareg.scenarios import builtin

ACCEPTANCE_LINES = []


class RunCache:
    """Full-horizon builtin runs, computed once per session."""

    def __init__(self):
        self._runs = {}

    def __call__(self, name):
        if name not in self._runs:
            sc = builtin(name)
            self._runs[name] = (sc, integrate(sc.models, sc.mode, sc.s0, sc.integration))
        return self._runs[name]


@pytest.fixture(scope="session")
def builtin_runs():
    return RunCache()


@pytest.fixture
def acceptance_line():
    def record(number, title, ok, detail):
        line = f"criterion {number:>2} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
