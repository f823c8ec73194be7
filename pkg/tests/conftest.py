import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    def record(number, passed, detail):
        ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
