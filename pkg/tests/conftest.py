import pytest


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def criterion(request):
    """Record one pass/fail line for the terminal summary, then return the verdict."""

    def record(label: str, ok: bool, detail: str) -> bool:
        request.config._acceptance_lines.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
        print(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
