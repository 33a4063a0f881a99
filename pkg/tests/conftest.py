import numpy as np
import pytest

from stress_sched.instance import desk_instance

_gate_lines: list[str] = []


@pytest.fixture(scope="session")
def desk():
    return desk_instance()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def gate():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    def check(number: int, title: str, ok: bool, detail: str = "") -> None:
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}"
        if detail:
            line += f"  ({detail})"
        _gate_lines.append(line)
        print(line)
        assert ok, line
    return check


def pytest_terminal_summary(terminalreporter):
    if _gate_lines:
        terminalreporter.section("acceptance")
        for line in _gate_lines:
            terminalreporter.write_line(line)
