import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record a one-line acceptance verdict; lines are printed in the terminal summary."""

    def _report(number, name, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2} {name}: {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
