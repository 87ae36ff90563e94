import numpy as np
import pytest

_CRITERIA_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_CRITERIA_KEY] = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def criterion(request):
    """Record an acceptance criterion outcome; summarized at the end of the session."""
    results = request.config.stash[_CRITERIA_KEY]

    def record(number: int, name: str, ok: bool, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name} -- {detail}"
        results.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
