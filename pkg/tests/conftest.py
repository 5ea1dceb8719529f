import pytest

from helpers import facility, make_instance

_VERDICTS: list[str] = []


@pytest.fixture
def inst17():
    """One M/M/1 facility, one zone: optimal cost 17 at mu = 3."""
    return make_instance([facility()], [1.0], [[2.0]])


@pytest.fixture
def verdict():
    """Record and print one acceptance line, then assert it."""

    def emit(criterion: int, ok: bool, detail: str) -> None:
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} ({detail})"
        _VERDICTS.append(line)
        print(line)
        assert ok, line

    return emit


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
