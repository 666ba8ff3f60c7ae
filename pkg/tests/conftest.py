import pytest

_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_KEY] = []


@pytest.fixture
def record_criterion(request):
    """Record one ``CRITERION n PASS/FAIL: detail`` line, echoed in the terminal summary."""
    lines = request.config.stash[_KEY]

    def record(number: int, passed: bool, detail: str) -> str:
        line = f"CRITERION {number} {'PASS' if passed else 'FAIL'}: {detail}"
        print(line)
        lines.append((number, line))
        return line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
