import pytest

_REPORT: list[str] = []


@pytest.fixture
def report():
    """Collects one summary line per acceptance criterion."""
    def add(criterion: str, passed: bool | None, detail: str) -> None:
        status = "INFO" if passed is None else ("PASS" if passed else "FAIL")
        line = f"{status} criterion {criterion}: {detail}"
        _REPORT.append(line)
        print(line)
    return add


def pytest_terminal_summary(terminalreporter):
    if _REPORT:
        terminalreporter.section("acceptance criteria")
        for line in _REPORT:
            terminalreporter.write_line(line)
