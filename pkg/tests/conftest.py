import contextlib
import time

import pytest

_LINES: list = []


class _Criterion:
    def __init__(self, number, title, budget):
        self.number, self.title, self.budget = number, title, budget
        self.details: list = []

    def note(self, text):
        self.details.append(str(text))


@contextlib.contextmanager
def _run(number, title, budget):
    crit = _Criterion(number, title, budget)
    start = time.perf_counter()
    status = "FAIL"
    try:
        yield crit
        elapsed = time.perf_counter() - start
        crit.note(f"{elapsed:.1f}s of {budget:g}s")
        assert elapsed < budget, f"criterion {number} exceeded its {budget:g}s budget"
        status = "PASS"
    except pytest.skip.Exception as exc:
        status, crit.details = "SKIP", [str(exc)]
        raise
    except BaseException as exc:
        crit.note(f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
        raise
    finally:
        line = f"[{status}] criterion {number}: {title} ({'; '.join(crit.details)})"
        _LINES.append(line)
        print(line)


@pytest.fixture
def criterion():
    """Context manager that times a block and records one PASS/FAIL line."""
    return _run


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
